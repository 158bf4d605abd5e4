#include "sccv/mfg.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sccv/parallel.hpp"

namespace sccv {

double DiscreteMeasure::total() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void DiscreteMeasure::validate_probability(double tol) const {
  if (points.size() != weights.size() || points.empty())
    throw Error(ErrorCode::UnbalancedMeasure, "a measure needs one weight per atom and at least one atom");
  for (double w : weights)
    if (!(w > 0.0)) throw Error(ErrorCode::UnbalancedMeasure, "atom weights must be positive");
  if (!(std::abs(total() - 1.0) <= tol)) throw Error(ErrorCode::UnbalancedMeasure, "weights must sum to 1");
}

namespace {

// Transportation simplex on the bipartite support. Basis cells form a spanning
// tree of rows and columns; Dantzig pricing, with Bland's rule after a run of
// degenerate pivots to rule out cycling.
class Transport {
 public:
  Transport(std::vector<double> supply, std::vector<double> demand, Mat cost)
      : m_(static_cast<int>(supply.size())), n_(static_cast<int>(demand.size())), C_(std::move(cost)) {
    northwest_corner(std::move(supply), std::move(demand));
  }

  double solve() {
    const double cscale = 1.0 + C_.cwiseAbs().maxCoeff();
    const long cap = 200L * (m_ + n_) * (m_ + n_) + 10000;
    int degenerate_run = 0;
    for (long it = 0; it < cap; ++it) {
      potentials();
      const bool bland = degenerate_run > m_ + n_;
      int ei = -1, ej = -1;
      double best = -1e-13 * cscale;
      for (int i = 0; i < m_ && !(bland && ei >= 0); ++i)
        for (int j = 0; j < n_; ++j) {
          const double r = C_(i, j) - u_[i] - v_[j];
          if (r < best) {
            best = bland ? best : r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      if (ei < 0) return objective();
      degenerate_run = pivot(ei, ej) ? 0 : degenerate_run + 1;
    }
    throw Error(ErrorCode::NoConvergence, "transportation simplex exceeded its pivot budget");
  }

 private:
  struct Cell {
    int i, j;
    double x;
  };

  void northwest_corner(std::vector<double> s, std::vector<double> d) {
    int i = 0, j = 0;
    while (i < m_ && j < n_) {
      const double x = std::min(s[i], d[j]);
      cells_.push_back({i, j, x});
      s[i] -= x;
      d[j] -= x;
      if (i == m_ - 1)
        ++j;
      else if (j == n_ - 1)
        ++i;
      else if (s[i] < d[j])
        ++i;
      else if (d[j] < s[i])
        ++j;
      else
        ++i;  // both exhausted: the next cell carries a degenerate zero
    }
  }

  void adjacency() {
    adj_.assign(m_ + n_, {});
    for (int c = 0; c < static_cast<int>(cells_.size()); ++c) {
      adj_[cells_[c].i].push_back(c);
      adj_[m_ + cells_[c].j].push_back(c);
    }
  }

  void potentials() {
    adjacency();
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int c : adj_[node]) {
        const Cell& e = cells_[c];
        const int other = node < m_ ? m_ + e.j : e.i;
        if (seen[other]) continue;
        seen[other] = 1;
        if (node < m_)
          v_[e.j] = C_(e.i, e.j) - u_[e.i];
        else
          u_[e.i] = C_(e.i, e.j) - v_[e.j];
        stack.push_back(other);
      }
    }
  }

  // Returns true when the pivot moved a positive amount.
  bool pivot(int ei, int ej) {
    // Tree path from row ei to column ej.
    std::vector<int> parent_cell(m_ + n_, -1), parent_node(m_ + n_, -1);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<int> queue = {ei};
    seen[ei] = 1;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int node = queue[q];
      if (node == m_ + ej) break;
      for (int c : adj_[node]) {
        const Cell& e = cells_[c];
        const int other = node < m_ ? m_ + e.j : e.i;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_cell[other] = c;
        parent_node[other] = node;
        queue.push_back(other);
      }
    }
    std::vector<int> path;  // from the column end back to row ei
    for (int node = m_ + ej; node != ei; node = parent_node[node]) path.push_back(parent_cell[node]);
    const int L = static_cast<int>(path.size());
    // path[L-1] shares row ei with the entering cell and decreases; signs alternate.
    int leave = -1;
    long leave_key = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (int k = L - 1; k >= 0; k -= 2) {
      const Cell& e = cells_[path[k]];
      const long key = static_cast<long>(e.i) * n_ + e.j;
      if (e.x < theta || (e.x == theta && key < leave_key)) {
        leave_key = key;
        theta = e.x;
        leave = path[k];
      }
    }
    theta = std::max(theta, 0.0);
    for (int k = 0; k < L; ++k) {
      Cell& e = cells_[path[k]];
      if ((L - 1 - k) % 2 == 0)
        e.x = std::max(e.x - theta, 0.0);
      else
        e.x += theta;
    }
    cells_[leave] = {ei, ej, theta};
    return theta > 0.0;
  }

  double objective() const {
    double J = 0.0;
    for (const auto& e : cells_) J += e.x * C_(e.i, e.j);
    return J;
  }

  int m_, n_;
  Mat C_;
  std::vector<Cell> cells_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> u_, v_;
};

}  // namespace

double kantorovich_d1(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.points.size() != a.weights.size() || b.points.size() != b.weights.size())
    throw Error(ErrorCode::UnbalancedMeasure, "a measure needs one weight per atom");
  for (double w : a.weights)
    if (!(w >= 0.0)) throw Error(ErrorCode::UnbalancedMeasure, "atom weights must be nonnegative");
  for (double w : b.weights)
    if (!(w >= 0.0)) throw Error(ErrorCode::UnbalancedMeasure, "atom weights must be nonnegative");
  const double ta = a.total(), tb = b.total();
  if (!(std::abs(ta - tb) <= 1e-9)) throw Error(ErrorCode::UnbalancedMeasure, "measures carry different mass");
  if (ta == 0.0) return 0.0;

  std::vector<int> ia, ib;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.weights[i] > 0.0) ia.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b.weights[j] > 0.0) ib.push_back(static_cast<int>(j));
  const int m = static_cast<int>(ia.size()), n = static_cast<int>(ib.size());
  Mat C(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = (a.points[ia[i]] - b.points[ib[j]]).norm();
  std::vector<double> s(m), d(n);
  for (int i = 0; i < m; ++i) s[i] = a.weights[ia[i]];
  for (int j = 0; j < n; ++j) d[j] = b.weights[ib[j]] * (ta / tb);
  if (m == 1) {
    double J = 0.0;
    for (int j = 0; j < n; ++j) J += d[j] * C(0, j);
    return J;
  }
  if (n == 1) {
    double J = 0.0;
    for (int i = 0; i < m; ++i) J += s[i] * C(i, 0);
    return J;
  }
  return std::max(0.0, Transport(std::move(s), std::move(d), std::move(C)).solve());
}

void TrajectoryMeasure::validate(double tol) const {
  m0.validate_probability(tol);
  if (particles.empty()) throw Error(ErrorCode::UnbalancedMeasure, "a trajectory measure needs particles");
  const auto& g0 = particles.front().gamma;
  g0.validate();
  std::vector<double> mass(m0.size(), 0.0);
  double total = 0.0;
  for (const auto& p : particles) {
    if (p.atom < 0 || p.atom >= static_cast<int>(m0.size()))
      throw Error(ErrorCode::UnbalancedMeasure, "particle refers to a missing atom");
    if (!(p.weight > 0.0)) throw Error(ErrorCode::UnbalancedMeasure, "particle weights must be positive");
    if (p.gamma.N() != g0.N() || p.gamma.t0 != g0.t0 || p.gamma.t1 != g0.t1)
      throw Error(ErrorCode::InvalidTrajectory, "particles must share one time grid");
    if (p.gamma.knots.front() != m0.points[p.atom])
      throw Error(ErrorCode::UnbalancedMeasure, "particle does not start at its atom");
    mass[p.atom] += p.weight;
    total += p.weight;
  }
  if (!(std::abs(total - 1.0) <= tol)) throw Error(ErrorCode::UnbalancedMeasure, "particle weights must sum to 1");
  for (std::size_t a = 0; a < mass.size(); ++a)
    if (!(std::abs(mass[a] - m0.weights[a]) <= tol))
      throw Error(ErrorCode::UnbalancedMeasure, "initial marginal differs from m0");
}

DiscreteMeasure TrajectoryMeasure::initial_marginal() const {
  DiscreteMeasure out;
  out.points = m0.points;
  out.weights.assign(m0.size(), 0.0);
  for (const auto& p : particles) out.weights[p.atom] += p.weight;
  return out;
}

double TrajectoryMeasure::max_speed() const {
  double s = 0.0;
  for (const auto& p : particles) s = std::max(s, p.gamma.max_speed());
  return s;
}

TrajectoryMeasure constant_measure(const DiscreteMeasure& m0, double T, int N) {
  m0.validate_probability();
  TrajectoryMeasure eta;
  eta.m0 = m0;
  for (std::size_t a = 0; a < m0.size(); ++a)
    eta.particles.push_back({Trajectory::constant(0.0, T, N, m0.points[a]), m0.weights[a], static_cast<int>(a)});
  return eta;
}

DiscreteMeasure evaluate_at(const TrajectoryMeasure& eta, double t) {
  DiscreteMeasure m;
  m.points.reserve(eta.particles.size());
  m.weights.reserve(eta.particles.size());
  for (const auto& p : eta.particles) {
    m.points.push_back(p.gamma.at(t));
    m.weights.push_back(p.weight);
  }
  return m;
}

MeasureFlow evaluate_flow(const TrajectoryMeasure& eta, const std::vector<double>& times) {
  MeasureFlow flow;
  flow.times = times;
  for (double t : times) flow.measures.push_back(evaluate_at(eta, t));
  return flow;
}

std::vector<double> flow_times(const TrajectoryMeasure& eta) {
  const auto& g = eta.particles.front().gamma;
  std::vector<double> t(g.N() + 1);
  for (int k = 0; k <= g.N(); ++k) t[k] = g.time(k);
  return t;
}

double lip_flow(const MeasureFlow& flow) {
  if (flow.times.size() < 2) throw Error(ErrorCode::InvalidConfig, "a flow needs at least two time slices");
  double L = 0.0;
  for (std::size_t i = 0; i + 1 < flow.times.size(); ++i)
    L = std::max(L, kantorovich_d1(flow.measures[i + 1], flow.measures[i]) / (flow.times[i + 1] - flow.times[i]));
  return L;
}

double flow_speed_bound(const TrajectoryMeasure& eta) {
  const int N = eta.particles.front().gamma.N();
  double S = 0.0;
  for (int k = 0; k < N; ++k) {
    double s = 0.0;
    for (const auto& p : eta.particles) s += p.weight * p.gamma.interval_velocity(k).norm();
    S = std::max(S, s);
  }
  return S;
}

namespace {

void kernel_sum(double A, double w, const Point& x, const DiscreteMeasure& m, int order, double& val, Vec& D,
                Mat& D2) {
  const int n = static_cast<int>(x.size());
  val = 0.0;
  if (order >= 1) D = Vec::Zero(n);
  if (order >= 2) D2 = Mat::Zero(n, n);
  if (A == 0.0) return;
  const double iw2 = 1.0 / (w * w);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const Vec z = x - m.points[j];
    const double phi = m.weights[j] * A * std::exp(-0.5 * z.squaredNorm() * iw2);
    val += phi;
    if (order >= 1) D -= phi * iw2 * z;
    if (order >= 2) D2 += phi * iw2 * (iw2 * z * z.transpose() - Mat::Identity(n, n));
  }
}

}  // namespace

KernelCoupling::KernelCoupling(double amp_F, double width_F, double amp_G, double width_G)
    : amp_F_(amp_F), width_F_(width_F), amp_G_(amp_G), width_G_(width_G) {
  if (!(amp_F >= 0.0 && amp_G >= 0.0 && width_F > 0.0 && width_G > 0.0))
    throw Error(ErrorCode::InvalidProblem, "kernel amplitudes must be >= 0 and widths > 0");
}

void KernelCoupling::running(const Point& x, const DiscreteMeasure& m, int order, double& F, Vec& DF,
                             Mat& D2F) const {
  kernel_sum(amp_F_, width_F_, x, m, order, F, DF, D2F);
}

void KernelCoupling::terminal(const Point& x, const DiscreteMeasure& m, int order, double& G, Vec& DG,
                              Mat& D2G) const {
  kernel_sum(amp_G_, width_G_, x, m, order, G, DG, D2G);
}

double KernelCoupling::kappa() const {
  // sup |phi'| of a Gaussian bump is attained at |z| = width.
  const double e = std::exp(-0.5);
  return amp_F_ * e / width_F_ + amp_G_ * e / width_G_;
}

CouplingReport check_coupling(const Coupling& coupling, const Domain& dom, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(1, 6);
  std::uniform_real_distribution<double> uw(0.05, 1.0);
  auto random_measure = [&] {
    DiscreteMeasure m;
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
      m.points.push_back(sample_region(dom, 0.0, rng));
      m.weights.push_back(uw(rng));
    }
    const double s = m.total();
    for (double& w : m.weights) w /= s;
    return m;
  };
  const double kappa = coupling.kappa();
  CouplingReport rep;
  rep.lipschitz_in_m.name = "lipschitz_in_m";
  rep.gradient_bound.name = "gradient_bound";
  const double tol = 1e-12;
  for (int s = 0; s < samples; ++s) {
    const auto m1 = random_measure(), m2 = random_measure();
    const Point x = sample_region(dom, dom.rho0(), rng);
    double F1, F2, G1, G2;
    Vec DF1, DF2, DG1, DG2;
    Mat H;
    coupling.running(x, m1, 1, F1, DF1, H);
    coupling.running(x, m2, 1, F2, DF2, H);
    coupling.terminal(x, m1, 1, G1, DG1, H);
    coupling.terminal(x, m2, 1, G2, DG2, H);
    const double lhs = std::abs(F1 - F2) + std::abs(G1 - G2);
    const double m_lip = lhs - kappa * kantorovich_d1(m1, m2);
    rep.lipschitz_in_m.worst_margin = std::max(rep.lipschitz_in_m.worst_margin, m_lip);
    if (m_lip > tol * (1.0 + lhs)) rep.lipschitz_in_m.pass = false;
    const double g = DF1.norm() + DG1.norm();
    rep.gradient_bound.worst_margin = std::max(rep.gradient_bound.worst_margin, g - kappa);
    if (g - kappa > tol * (1.0 + g)) rep.gradient_bound.pass = false;
  }
  return rep;
}

namespace {

// Flow of a trajectory measure, cached at its knots.
class FlowCache {
 public:
  explicit FlowCache(const TrajectoryMeasure& eta) : eta_(eta) {
    const auto& g = eta_.particles.front().gamma;
    t0_ = g.t0;
    t1_ = g.t1;
    N_ = g.N();
    for (int k = 0; k <= N_; ++k) knots_.push_back(evaluate_at(eta_, g.time(k)));
  }

  // Returns the cached slice on a knot, otherwise fills `scratch`.
  const DiscreteMeasure& at(double t, DiscreteMeasure& scratch) const {
    const double s = std::clamp((t - t0_) / (t1_ - t0_) * N_, 0.0, static_cast<double>(N_));
    const double k = std::round(s);
    if (std::abs(s - k) <= 1e-9) return knots_[static_cast<int>(k)];
    scratch = evaluate_at(eta_, t);
    return scratch;
  }
  const DiscreteMeasure& final_slice() const { return knots_.back(); }

 private:
  TrajectoryMeasure eta_;
  double t0_ = 0.0, t1_ = 1.0;
  int N_ = 0;
  std::vector<DiscreteMeasure> knots_;
};

class CoupledLagrangian final : public Lagrangian {
 public:
  CoupledLagrangian(std::shared_ptr<const Lagrangian> base, std::shared_ptr<const Coupling> coupling,
                    std::shared_ptr<const FlowCache> flow)
      : base_(std::move(base)), coupling_(std::move(coupling)), flow_(std::move(flow)) {}

  int dim() const override { return base_->dim(); }
  void eval(double t, const Point& x, const Vec& v, int order, LagrangianEval& out) const override {
    base_->eval(t, x, v, order, out);
    DiscreteMeasure scratch;
    const DiscreteMeasure& m = flow_->at(t, scratch);
    double F;
    Vec DF;
    Mat D2F;
    coupling_->running(x, m, order, F, DF, D2F);
    out.f += F;
    if (order >= 1) out.fx += DF;
    if (order >= 2) out.fxx += D2F;
  }

 private:
  std::shared_ptr<const Lagrangian> base_;
  std::shared_ptr<const Coupling> coupling_;
  std::shared_ptr<const FlowCache> flow_;
};

class CoupledTerminal final : public Terminal {
 public:
  CoupledTerminal(std::shared_ptr<const Terminal> base, std::shared_ptr<const Coupling> coupling,
                  std::shared_ptr<const FlowCache> flow)
      : base_(std::move(base)), coupling_(std::move(coupling)), flow_(std::move(flow)) {}

  double value(const Point& x) const override {
    double G;
    Vec D;
    Mat H;
    coupling_->terminal(x, flow_->final_slice(), 0, G, D, H);
    return base_->value(x) + G;
  }
  Vec grad(const Point& x) const override {
    double G;
    Vec D;
    Mat H;
    coupling_->terminal(x, flow_->final_slice(), 1, G, D, H);
    return base_->grad(x) + D;
  }
  Mat hess(const Point& x) const override {
    double G;
    Vec D;
    Mat H;
    coupling_->terminal(x, flow_->final_slice(), 2, G, D, H);
    return base_->hess(x) + H;
  }

 private:
  std::shared_ptr<const Terminal> base_;
  std::shared_ptr<const Coupling> coupling_;
  std::shared_ptr<const FlowCache> flow_;
};

double sup_distance(const Trajectory& a, const Trajectory& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.knots.size(); ++k) d = std::max(d, (a.knots[k] - b.knots[k]).norm());
  return d;
}

// Heaviest particle of every atom.
std::vector<Trajectory> representatives(const TrajectoryMeasure& eta) {
  std::vector<Trajectory> out(eta.m0.size());
  std::vector<double> w(eta.m0.size(), -1.0);
  for (const auto& p : eta.particles)
    if (p.weight > w[p.atom]) {
      w[p.atom] = p.weight;
      out[p.atom] = p.gamma;
    }
  return out;
}

}  // namespace

Problem coupled_problem(const Problem& base, std::shared_ptr<const Coupling> coupling,
                        const TrajectoryMeasure& eta) {
  base.validate();
  if (!coupling) throw Error(ErrorCode::InvalidProblem, "missing coupling");
  eta.validate(1e-9);
  auto flow = std::make_shared<const FlowCache>(eta);
  Problem p = base;
  p.lagrangian = std::make_shared<CoupledLagrangian>(base.lagrangian, coupling, flow);
  p.terminal = std::make_shared<CoupledTerminal>(base.terminal, coupling, flow);
  p.M = base.M + coupling->sup_bound() + coupling->kappa();
  p.kappa = base.kappa + coupling->kappa() * flow_speed_bound(eta);
  return p;
}

double l0_bound(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                const TrajectoryMeasure& eta) {
  const Problem p = coupled_problem(base, std::move(coupling), eta);
  const auto rep = check_assumptions(p, dom);
  const double K = energy_bound(p, rep);
  return lstar_bound(p, rep, K, delta_choice(p, dom).delta);
}

BestResponse best_response(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                           const TrajectoryMeasure& eta, const MfgOptions& opt,
                           const std::vector<Trajectory>* warm) {
  const Problem p = coupled_problem(base, coupling, eta);
  const double delta = delta_choice(p, dom).delta;
  const auto& m0 = eta.m0;
  const int na = static_cast<int>(m0.size());
  if (warm && static_cast<int>(warm->size()) != na)
    throw Error(ErrorCode::InvalidConfig, "warm starts must provide one arc per atom");

  BestResponse br;
  br.eta.m0 = m0;
  br.eta.particles.resize(na);
  br.costs.assign(na, 0.0);
  std::vector<char> tie(na, 0);
  parallel_for(na, opt.threads, [&](int a) {
    try {
      const Trajectory* init = warm && (*warm)[a].N() == opt.N ? &(*warm)[a] : nullptr;
      auto res = epsilon_schedule(p, dom, m0.points[a], delta, opt.N, opt.solver, init);
      if (opt.tie_check && init) {
        auto cold = epsilon_schedule(p, dom, m0.points[a], delta, opt.N, opt.solver, nullptr);
        const double c1 = res.report.cost, c2 = cold.report.cost;
        if (std::abs(c1 - c2) <= 1e-6 * (1.0 + std::abs(c1)) && sup_distance(res.gamma, cold.gamma) > 1e-3)
          tie[a] = 1;
        if (c2 < c1 - 1e-6 * (1.0 + std::abs(c1))) res = std::move(cold);
      }
      br.costs[a] = res.report.cost;
      br.eta.particles[a] = {std::move(res.gamma), m0.weights[a], a};
    } catch (const Error& e) {
      throw Error(e.code(), "atom " + std::to_string(a) + ": " + e.what());
    }
  });
  for (int a = 0; a < na; ++a)
    if (tie[a]) {
      br.ties.push_back(a);
      spdlog::warn("best response: atom {} may have several minimizers", a);
    }
  br.max_speed = br.eta.max_speed();
  const auto rep = check_assumptions(p, dom);
  br.L0 = lstar_bound(p, rep, energy_bound(p, rep), delta);
  return br;
}

double flow_distance(const TrajectoryMeasure& a, const TrajectoryMeasure& b) {
  const auto times = flow_times(a);
  std::vector<double> d(times.size(), 0.0);
  for (std::size_t i = 0; i < times.size(); ++i) d[i] = kantorovich_d1(evaluate_at(a, times[i]), evaluate_at(b, times[i]));
  return *std::max_element(d.begin(), d.end());
}

TrajectoryMeasure mix_measures(const TrajectoryMeasure& a, const TrajectoryMeasure& b, double alpha,
                               double prune_dist, double prune_weight) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "damping must lie in (0, 1]");
  if (a.m0.points != b.m0.points || a.m0.weights != b.m0.weights)
    throw Error(ErrorCode::UnbalancedMeasure, "mixed measures must share m0");
  TrajectoryMeasure out;
  out.m0 = a.m0;
  auto add = [&](const Particle& p, double w) {
    if (!(w > 0.0)) return;
    for (auto& q : out.particles)
      if (q.atom == p.atom && sup_distance(q.gamma, p.gamma) < prune_dist) {
        q.weight += w;
        return;
      }
    out.particles.push_back({p.gamma, w, p.atom});
  };
  for (const auto& p : a.particles) add(p, (1.0 - alpha) * p.weight);
  for (const auto& p : b.particles) add(p, alpha * p.weight);

  // Fold light particles into the nearest heavier sibling of the same atom.
  std::vector<char> drop(out.particles.size(), 0);
  for (std::size_t i = 0; i < out.particles.size(); ++i) {
    if (out.particles[i].weight >= prune_weight) continue;
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < out.particles.size(); ++j) {
      if (j == i || drop[j] || out.particles[j].atom != out.particles[i].atom ||
          out.particles[j].weight < prune_weight)
        continue;
      const double d = sup_distance(out.particles[i].gamma, out.particles[j].gamma);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    if (best < 0) continue;
    out.particles[best].weight += out.particles[i].weight;
    drop[i] = 1;
  }
  std::vector<Particle> kept;
  for (std::size_t i = 0; i < out.particles.size(); ++i)
    if (!drop[i]) kept.push_back(std::move(out.particles[i]));
  out.particles = std::move(kept);
  return out;
}

FixedPointResult fixed_point(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                             const DiscreteMeasure& m0, const MfgOptions& opt, const TrajectoryMeasure* eta0) {
  if (!(opt.alpha > 0.0 && opt.alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "damping must lie in (0, 1]");
  if (!(opt.tol > 0.0) || opt.max_iter < 1) throw Error(ErrorCode::InvalidConfig, "tol and max_iter must be positive");
  TrajectoryMeasure eta = eta0 ? *eta0 : constant_measure(m0, base.horizon, opt.N);
  eta.validate(1e-9);
  if (eta.m0.points != m0.points || eta.m0.weights != m0.weights)
    throw Error(ErrorCode::UnbalancedMeasure, "initial measure does not match m0");
  if (eta.particles.front().gamma.N() != opt.N)
    throw Error(ErrorCode::InvalidConfig, "initial measure must use the configured grid");

  FixedPointResult out;
  std::vector<Trajectory> warm;
  for (int it = 0; it < opt.max_iter; ++it) {
    auto br = best_response(base, dom, coupling, eta, opt, warm.empty() ? nullptr : &warm);
    const double res = flow_distance(eta, br.eta);
    out.history.push_back(res);
    spdlog::debug("mfg: iteration {} residual {:.3e} particles {}", it + 1, res, eta.particles.size());
    warm.clear();
    for (const auto& p : br.eta.particles) warm.push_back(p.gamma);
    if (res <= opt.tol) {
      out.mixture = std::move(eta);
      out.eta = std::move(br.eta);
      out.iterations = it + 1;
      out.L0 = br.L0;
      return out;
    }
    eta = mix_measures(eta, br.eta, opt.alpha, opt.prune_dist, opt.prune_weight);
  }
  throw NoConvergenceError("residual " + std::to_string(out.history.back()) + " above tolerance after " +
                               std::to_string(opt.max_iter) + " iterations",
                           out.history);
}

Certificate equilibrium_certificate(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                                    const TrajectoryMeasure& eta, const MfgOptions& opt) {
  const auto warm = representatives(eta);
  MfgOptions o = opt;
  o.N = eta.particles.front().gamma.N();
  const auto br = best_response(base, dom, coupling, eta, o, &warm);
  const Problem p = coupled_problem(base, coupling, eta);
  const double delta = delta_choice(p, dom).delta;
  Certificate c;
  c.residual = flow_distance(eta, br.eta);
  c.max_speed = eta.max_speed();
  c.L0 = br.L0;
  for (const auto& q : eta.particles) {
    // The same penalized functional the best response minimized; its penalty
    // vanishes on feasible particles.
    PenaltyParams params;
    params.delta = delta;
    params.N = q.gamma.N();
    const double cost = penalized_cost(p, dom, params, q.gamma);
    c.particle_costs.push_back(cost);
    c.optimal_costs.push_back(br.costs[q.atom]);
    c.max_gap = std::max(c.max_gap, std::abs(cost - br.costs[q.atom]));
  }
  return c;
}

MildSolution mild_solution(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                           const TrajectoryMeasure& eta, const std::vector<double>& times,
                           const std::vector<Point>& points, const ValueOptions& opt) {
  const Problem p = coupled_problem(base, coupling, eta);
  MildSolution out;
  out.u = compute_value(p, dom, times, points, opt);
  out.m = evaluate_flow(eta, flow_times(eta));
  out.lip_m = lip_flow(out.m);
  const auto rep = check_assumptions(p, dom);
  out.L0 = lstar_bound(p, rep, energy_bound(p, rep), delta_choice(p, dom).delta);
  return out;
}

MonotonicityReport monotonicity_check(const Coupling& coupling,
                                      const std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>>& pairs,
                                      double tol) {
  MonotonicityReport rep;
  rep.min_value = std::numeric_limits<double>::infinity();
  for (const auto& [m1, m2] : pairs) {
    MonotonicityEntry e;
    auto integral = [&](bool running) {
      auto eval = [&](const Point& x, const DiscreteMeasure& m) {
        double v;
        Vec D;
        Mat H;
        if (running)
          coupling.running(x, m, 0, v, D, H);
        else
          coupling.terminal(x, m, 0, v, D, H);
        return v;
      };
      double s = 0.0;
      for (std::size_t i = 0; i < m1.size(); ++i)
        s += m1.weights[i] * (eval(m1.points[i], m1) - eval(m1.points[i], m2));
      for (std::size_t i = 0; i < m2.size(); ++i)
        s -= m2.weights[i] * (eval(m2.points[i], m1) - eval(m2.points[i], m2));
      return s;
    };
    e.running = integral(true);
    e.terminal = integral(false);
    e.d1 = kantorovich_d1(m1, m2);
    e.nonnegative = e.running >= -tol && e.terminal >= -tol;
    rep.all_nonnegative = rep.all_nonnegative && e.nonnegative;
    rep.min_value = std::min({rep.min_value, e.running, e.terminal});
    rep.entries.push_back(e);
  }
  if (pairs.empty()) rep.min_value = 0.0;
  return rep;
}

}  // namespace sccv
