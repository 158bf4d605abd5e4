#include "sccv/value.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sccv/errors.hpp"
#include "sccv/parallel.hpp"

namespace sccv {

std::vector<double> uniform_times(double T, int count) {
  if (count < 2) throw Error(ErrorCode::InvalidConfig, "a time grid needs at least two times");
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i) t[i] = T * i / (count - 1);
  t.back() = T;
  return t;
}

std::vector<Point> value_points(const Domain& dom, int per_axis) { return region_grid(dom, per_axis, 0.0); }

ValueGrid compute_value(const Problem& prob, const Domain& dom, const std::vector<double>& times,
                        const std::vector<Point>& points, const ValueOptions& opt) {
  prob.validate();
  if (times.size() < 2 || !(std::abs(times.back() - prob.horizon) <= 1e-12 * std::max(1.0, prob.horizon)))
    throw Error(ErrorCode::InvalidConfig, "value times must end at the horizon");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw Error(ErrorCode::InvalidConfig, "value times must increase");

  ValueGrid vg;
  vg.times = times;
  for (const auto& x : points)
    if (dom.b(x) <= dom.tau_bdry()) vg.points.push_back(x);
  vg.N = opt.N;
  vg.delta = opt.delta > 0.0 ? opt.delta : delta_choice(prob, dom).delta;
  const int nt = static_cast<int>(times.size());
  const int np = static_cast<int>(vg.points.size());
  vg.values = Mat::Constant(nt, np, std::numeric_limits<double>::quiet_NaN());
  if (opt.keep_arcs) vg.arcs.resize(static_cast<std::size_t>(nt) * np);
  std::vector<std::vector<NodeFailure>> failures(np);

  parallel_for(np, opt.threads, [&](int j) {
    const Point& x = vg.points[j];
    vg.values(nt - 1, j) = prob.terminal->value(x);
    Trajectory warm;
    bool have_warm = false;
    for (int i = nt - 2; i >= 0; --i) {
      try {
        auto res = epsilon_schedule(prob, dom, x, vg.delta, opt.N, opt.solver, have_warm ? &warm : nullptr,
                                    times[i]);
        vg.values(i, j) = res.report.cost;
        warm = res.gamma;
        have_warm = true;
        if (opt.keep_arcs) vg.arcs[static_cast<std::size_t>(i) * np + j] = std::move(res.gamma);
      } catch (const Error& e) {
        failures[j].push_back({i, j, e.what()});
        spdlog::warn("value: node (t={}, point {}) failed: {}", times[i], j, e.what());
      }
    }
  });
  for (auto& f : failures) vg.failures.insert(vg.failures.end(), f.begin(), f.end());
  return vg;
}

LipschitzReport lipschitz_report(const ValueGrid& vg) {
  LipschitzReport rep;
  const int nt = static_cast<int>(vg.times.size());
  const int np = static_cast<int>(vg.points.size());
  double hmin = std::numeric_limits<double>::infinity();
  for (int a = 0; a < np; ++a)
    for (int b = a + 1; b < np; ++b) hmin = std::min(hmin, (vg.points[a] - vg.points[b]).norm());
  const double reach = 1.5 * hmin;
  for (int i = 0; i < nt; ++i)
    for (int a = 0; a < np; ++a)
      for (int b = a + 1; b < np; ++b) {
        const double dx = (vg.points[a] - vg.points[b]).norm();
        if (dx > reach) continue;
        const double du = std::abs(vg.values(i, a) - vg.values(i, b));
        if (std::isfinite(du)) rep.Lx = std::max(rep.Lx, du / dx);
      }
  for (int i = 0; i + 1 < nt; ++i)
    for (int a = 0; a < np; ++a) {
      const double du = std::abs(vg.values(i + 1, a) - vg.values(i, a));
      if (!std::isfinite(du)) continue;
      const double L = du / (vg.times[i + 1] - vg.times[i]);
      rep.Lt = std::max(rep.Lt, L);
      if (i + 2 < nt) rep.Lt_interior = std::max(rep.Lt_interior, L);
    }
  return rep;
}

double dpp_check(const Problem& prob, const Domain& dom, const ValueGrid& vg, int samples, std::uint64_t seed,
                 const SolverOptions& solver) {
  const int nt = static_cast<int>(vg.times.size());
  const int np = static_cast<int>(vg.points.size());
  if (vg.arcs.empty() || nt < 2 || np == 0) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ti(0, nt - 2), pi(0, np - 1);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int i = ti(rng), j = pi(rng);
    const Trajectory& g = vg.arc(i, j);
    if (g.knots.empty() || !std::isfinite(vg.values(i, j))) continue;
    const int N = g.N();
    const int m = N / 2;
    const double h = g.dt();
    // Head: running cost on [t_i, t_m]; the running penalty is added below with
    // trapezoid weight 1/2 at t_m.
    double running = 0.0;
    for (int k = 0; k < m; ++k) {
      const Vec v = g.interval_velocity(k);
      running += 0.5 * h * (prob.lagrangian->value(g.time(k), g.knots[k], v) +
                            prob.lagrangian->value(g.time(k + 1), g.knots[k + 1], v));
    }
    // The split point lies on the certified arc, hence in the closed set up to
    // the feasibility tolerance; snap the tiny excess so the tail start is valid.
    Point xm = g.knots[m];
    if (dom.b(xm) > 0.0) xm = dom.nearest_boundary_point(xm);
    Trajectory tail_init;
    tail_init.t0 = g.time(m);
    tail_init.t1 = g.t1;
    tail_init.knots.assign(g.knots.begin() + m, g.knots.end());
    try {
      auto tail = epsilon_schedule(prob, dom, xm, vg.delta, N - m, solver, &tail_init, g.time(m));
      for (int k = 0; k <= m; ++k) {
        const double w = (k == 0 || k == m) ? 0.5 : 1.0;
        running += w * h / tail.params.epsilon * distance(dom, g.knots[k]);
      }
      worst = std::max(worst, std::abs(vg.values(i, j) - (running + tail.report.cost)));
    } catch (const Error& e) {
      spdlog::warn("dpp_check: tail solve failed: {}", e.what());
      return std::numeric_limits<double>::infinity();
    }
  }
  return worst;
}

}  // namespace sccv
