// Runs every acceptance criterion and prints one PASS/FAIL line each.
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "../tests/oracles.hpp"
#include "../tests/problems.hpp"
#include "commands.hpp"
#include "sccv/mfg.hpp"
#include "sccv/pmp.hpp"
#include "sccv/value.hpp"

using namespace sccv;
using namespace testing_problems;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string g(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

const Domain& disk() {
  static const Domain d = Domain::ball(v2(0, 0), 1.0);
  return d;
}

std::vector<Point> square_points(double half, int per_axis) {
  std::vector<Point> pts;
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j)
      pts.push_back(v2(-half + 2 * half * i / (per_axis - 1), -half + 2 * half * j / (per_axis - 1)));
  return pts;
}

struct Certified {
  ScheduleResult sched;
  Extremal ex;
  PmpReport rep;
};

Certified certify(const Problem& prob, const Domain& dom, const Point& x0, int N) {
  Certified c;
  c.sched = epsilon_schedule(prob, dom, x0, delta_choice(prob, dom).delta, N);
  c.ex = build_extremal(prob, dom, c.sched.gamma, c.sched.params);
  c.rep = check_extremal(prob, dom, c.ex);
  return c;
}

// ---- 1 ----------------------------------------------------------------------

void geometry(Verdict& v) {
  const std::vector<std::pair<const char*, Domain>> shapes = {
      {"disk", disk()},
      {"ellipse", Domain::ellipse(v2(0, 0), v2(2, 1))},
      {"smoothed box", Domain::smoothed_box(v2(0, 0), v2(1.5, 1), 0.3)}};
  for (const auto& [name, dom] : shapes) {
    const GeometryReport r = geometry_invariants(dom, 10000, 1);
    v.detail << " " << name << ": |Db|-1 " << g(r.unit_gradient) << ", D2b Db " << g(r.hessian_null)
             << ", subdiff " << r.subdiff_checked - r.subdiff_mismatches << "/" << r.subdiff_checked << ";";
    v.require(r.passed(), std::string(name) + " invariants");
  }
}

// ---- 2 ----------------------------------------------------------------------

void legendre_identities(Verdict& v) {
  Mat A0(2, 2);
  A0 << 1.5, 0.3, 0.3, 1.0;
  std::vector<std::pair<const char*, Problem>> fams = {
      {"kinetic", make_problem(QuadraticLagrangian::kinetic(2), QuadraticTerminal::zero(2), 1.0, 0.0)},
      {"pull", wall_problem()},
      {"weighted", make_problem(std::make_shared<QuadraticLagrangian>(
                                    A0, 0.2, v2(0.1, -0.2), v2(0.3, 0.4),
                                    std::vector<Potential>{GaussianPotential{v2(0.2, 0.1), 0.5, 0.3}}),
                                QuadraticTerminal::zero(2), 3.0, 10.0)},
      {"rich", rich_problem()}};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& [name, prob] : fams) {
    Hamiltonian ham(prob);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const double t = 0.5 * prob.horizon * (1 + u(rng));
      const Point x = v2(u(rng), u(rng));
      const Vec p = v2(3 * u(rng), 3 * u(rng));
      const auto d = ham.derivs(t, x, p, false);
      const Vec vel = -d.DpH;
      worst = std::max(worst, (p + prob.lagrangian->dv(t, x, vel)).norm());
      worst = std::max(worst, (d.DxH + prob.lagrangian->dx(t, x, vel)).norm());
      // H(p) + f(v*) + <p, v*> = 0 at the maximizer.
      worst = std::max(worst, std::abs(d.H + prob.lagrangian->value(t, x, vel) + p.dot(vel)));
      // Conjugating H back: f(v) = sup_q { -<q, v> - H(q) }, Newton from a shifted start.
      Vec q = p + 0.5 * v2(u(rng), u(rng));
      for (int it = 0; it < 30; ++it) {
        const auto dq = ham.derivs(t, x, q, false);
        q -= dq.DppH.inverse() * (dq.DpH + vel);
      }
      worst = std::max(worst, std::abs(-q.dot(vel) - ham.value(t, x, q) - prob.lagrangian->value(t, x, vel)));
    }
    v.detail << " " << name << " " << g(worst) << ";";
    v.require(worst < 1e-8, std::string(name) + " identities");
  }
}

// ---- 3 ----------------------------------------------------------------------

void interior_closed_form(Verdict& v) {
  const Problem prob = interior_problem();
  const Vec a = v2(0.5, 0);
  const auto sched = epsilon_schedule(prob, disk(), v2(0, 0), delta_choice(prob, disk()).delta, 256);
  double err = 0.0;
  for (int k = 0; k <= sched.gamma.N(); ++k)
    err = std::max(err, (sched.gamma.knots[k] - a * sched.gamma.time(k)).norm());
  v.detail << " trajectory sup error " << g(err) << ";";
  v.require(err <= 1e-4, "trajectory");

  ValueOptions opt;
  opt.N = 64;
  const auto times = uniform_times(1.0, 10);
  const auto vg = compute_value(prob, disk(), times, square_points(1.0, 10), opt);
  v.require(vg.failures.empty(), "value node solves");
  double uerr = 0.0, below = 0.0;
  int closed = 0, bounded = 0;
  for (std::size_t i = 0; i < times.size(); ++i)
    for (std::size_t j = 0; j < vg.points.size(); ++j) {
      const Point& x = vg.points[j];
      const double exact = -a.dot(x) - 0.5 * a.squaredNorm() * (1.0 - times[i]);
      if ((x + a * (1.0 - times[i])).norm() <= 1.0) {
        uerr = std::max(uerr, std::abs(vg.values(i, j) - exact));
        ++closed;
      } else {
        below = std::max(below, exact - vg.values(i, j));
        ++bounded;
      }
    }
  v.detail << " u error " << g(uerr) << " on " << closed << " nodes with an interior free arc, " << bounded
           << " constrained nodes above the free value (worst " << g(below) << ");";
  v.require(uerr <= 1e-4, "value closed form");
  v.require(below <= 1e-9, "constrained nodes lie above the free value");
}

// ---- 4 ----------------------------------------------------------------------

void containment(Verdict& v) {
  const Problem prob = wall_problem();
  const auto sched = epsilon_schedule(prob, disk(), v2(0, 0), delta_choice(prob, disk()).delta, 1024);
  const auto ref = oracle::barrier_disk({0, 0}, {-3, 0}, {0, 0}, {0, 0}, 1.0, 1.0, 4096);
  const double rel = std::abs(sched.report.cost - ref.cost) / std::abs(ref.cost);
  v.detail << " epsilon " << g(sched.params.epsilon) << ", max distance " << g(sched.max_distance) << ", cost "
           << g(sched.report.cost) << " vs oracle " << g(ref.cost) << " (rel " << g(rel) << ");";
  v.require(sched.max_distance <= 1e-6, "containment");
  v.require(rel <= 1e-3, "oracle cost");
}

// ---- 5 ----------------------------------------------------------------------

// Observed order between consecutive grids; residuals already at rounding level
// have nothing left to shrink and count as converged.
bool shrinks(double coarse, double fine, double& order) {
  order = std::log2(coarse / std::max(fine, 1e-300));
  return (coarse <= 1e-9 && fine <= 1e-9) || order >= 1.8;
}

void pmp_suite(Verdict& v) {
  struct Case {
    const char* name;
    Problem prob;
    Domain dom;
    Point x0;
  };
  const std::vector<Case> cases = {{"S1", wall_problem(), disk(), v2(0, 0)},
                                   {"S3", ellipse_problem(), ellipse_domain(), v2(1.2, 0)}};
  for (const auto& c : cases) {
    std::vector<double> state, adj;
    PmpReport last;
    Extremal ex;
    for (int N : {256, 512, 1024}) {
      const auto r = certify(c.prob, c.dom, c.x0, N);
      state.push_back(r.rep.state_residual);
      adj.push_back(r.rep.adjoint_residual);
      last = r.rep;
      ex = r.ex;
    }
    double o1 = 0, o2 = 0, o3 = 0, o4 = 0;
    const bool s_ok = shrinks(state[0], state[1], o1) && shrinks(state[1], state[2], o2);
    const bool a_ok = shrinks(adj[0], adj[1], o3) && shrinks(adj[1], adj[2], o4);
    v.detail << " " << c.name << ": state " << g(state[2]) << " adjoint " << g(adj[2]) << " (orders " << g(o3) << ", "
             << g(o4) << "), transversality " << g(last.transversality) << ", min lam " << g(last.min_lam)
             << ", Lambda agreement " << g(last.lambda_agreement) << ", speed " << g(last.max_speed) << " <= L* "
             << g(ex.Lstar) << ", nu " << g(ex.nu) << ";";
    const std::string n = c.name;
    v.require(state[2] < 1e-3 && adj[2] < 1e-3, n + " residuals");
    v.require(s_ok && a_ok, n + " residual order");
    v.require(last.transversality < 1e-6, n + " transversality");
    v.require(last.min_lam >= -1e-4 * last.max_lam, n + " multiplier sign");
    v.require(last.lambda_agreement <= 1e-3, n + " Lambda agreement");
    v.require(last.max_speed <= ex.Lstar, n + " speed bound");
    const PmpCheck* nu = last.find("nu_bound");
    v.require(nu && nu->pass, n + " nu bound");
    v.require(last.contact_knots > 0, n + " contact arc present");
  }
}

// ---- 6 ----------------------------------------------------------------------

void conservation(Verdict& v) {
  const auto c = certify(wall_problem(), disk(), v2(0, 0), 1024);
  const double bound = 1e-6 * (1.0 + std::abs(c.ex.r.front()));
  v.detail << " r(0) " << g(c.ex.r.front()) << ", variation " << g(c.rep.r_variation) << " (bound " << g(bound)
           << ");";
  v.require(c.rep.r_variation < bound, "r variation");
}

// ---- 7 ----------------------------------------------------------------------

void energy_holder(Verdict& v) {
  struct Case {
    const char* name;
    Problem prob;
    Domain dom;
    Point x0;
  };
  const std::vector<Case> cases = {{"S1", wall_problem(), disk(), v2(0, 0)},
                                   {"S2", interior_problem(), disk(), v2(0, 0)},
                                   {"S3", ellipse_problem(), ellipse_domain(), v2(1.2, 0)}};
  auto check = [&](const std::string& name, const Problem& prob, const Domain& dom, double eps,
                   const Trajectory& gamma) {
    const double K = energy_bound(prob, dom);
    const double E = penalized_energy(prob, dom, eps, gamma);
    const double H = holder_half_ratio(gamma);
    const double Hb = std::sqrt(4.0 * prob.mu * K);
    v.detail << " " << name << " energy " << g(E) << " <= " << g(1.05 * K) << ", Hoelder " << g(H) << " <= " << g(Hb)
             << ";";
    v.require(E <= 1.05 * K, name + " energy");
    v.require(H <= Hb, name + " Hoelder");
  };
  for (const auto& c : cases) {
    const auto s = epsilon_schedule(c.prob, c.dom, c.x0, delta_choice(c.prob, c.dom).delta, 512);
    check(c.name, c.prob, c.dom, s.params.epsilon, s.gamma);
  }
  // S4: every equilibrium particle against its own coupled problem.
  auto coupling = std::make_shared<KernelCoupling>(1.0, 0.5);
  const auto fp = fixed_point(crowd_problem(), disk(), coupling, crowd_m0());
  const Problem coupled = coupled_problem(crowd_problem(), coupling, fp.mixture);
  double worstE = 0.0, worstH = 0.0;
  const double K = energy_bound(coupled, disk());
  for (const auto& p : fp.eta.particles) {
    v.require(max_distance(disk(), p.gamma) <= 1e-6, "S4 particle containment");
    worstE = std::max(worstE, penalized_energy(coupled, disk(), 1.0, p.gamma) / (1.05 * K));
    worstH = std::max(worstH, holder_half_ratio(p.gamma) / std::sqrt(4.0 * coupled.mu * K));
  }
  v.detail << " S4 worst energy ratio " << g(worstE) << ", Hoelder ratio " << g(worstH) << ";";
  v.require(worstE <= 1.0 && worstH <= 1.0, "S4 bounds");
}

// ---- 8 ----------------------------------------------------------------------

DiscreteMeasure random_measure(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), uw(0.05, 1.0);
  DiscreteMeasure m;
  for (int i = 0; i < k; ++i) {
    m.points.push_back(v2(u(rng), u(rng)));
    m.weights.push_back(uw(rng));
  }
  const double s = m.total();
  for (double& w : m.weights) w /= s;
  return m;
}

void d1_correctness(Verdict& v) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0), uw(0.05, 1.0);
  double line = 0.0, lp = 0.0, sym = 0.0, tri = 0.0;
  for (int s = 0; s < 100; ++s) {
    std::vector<double> xa, wa, xb, wb;
    const int ka = 1 + s % 7, kb = 1 + (s / 7) % 7;
    DiscreteMeasure a, b;
    for (int i = 0; i < ka; ++i) {
      xa.push_back(u(rng));
      wa.push_back(uw(rng));
    }
    for (int i = 0; i < kb; ++i) {
      xb.push_back(u(rng));
      wb.push_back(uw(rng));
    }
    double sa = 0, sb = 0;
    for (double w : wa) sa += w;
    for (double w : wb) sb += w;
    for (double& w : wa) w /= sa;
    for (double& w : wb) w /= sb;
    for (int i = 0; i < ka; ++i) {
      a.points.push_back(v2(xa[i], 0));
      a.weights.push_back(wa[i]);
    }
    for (int i = 0; i < kb; ++i) {
      b.points.push_back(v2(xb[i], 0));
      b.weights.push_back(wb[i]);
    }
    line = std::max(line, std::abs(kantorovich_d1(a, b) - oracle::w1_line(xa, wa, xb, wb)));
  }
  for (int s = 0; s < 100; ++s) {
    const DiscreteMeasure a = random_measure(rng, 4), b = random_measure(rng, 4);
    std::vector<Eigen::Vector2d> pa, pb;
    for (int i = 0; i < 4; ++i) {
      pa.emplace_back(a.points[i][0], a.points[i][1]);
      pb.emplace_back(b.points[i][0], b.points[i][1]);
    }
    lp = std::max(lp, std::abs(kantorovich_d1(a, b) - oracle::transport_by_enumeration(pa, a.weights, pb, b.weights)));
  }
  for (int s = 0; s < 100; ++s) {
    const DiscreteMeasure a = random_measure(rng, 3 + s % 5), b = random_measure(rng, 2 + s % 6),
                          c = random_measure(rng, 4 + s % 3);
    const double ab = kantorovich_d1(a, b), ba = kantorovich_d1(b, a), bc = kantorovich_d1(b, c),
                 ac = kantorovich_d1(a, c);
    sym = std::max(sym, std::abs(ab - ba));
    tri = std::max(tri, ac - ab - bc);
    v.require(kantorovich_d1(a, a) <= 1e-12 && ab > 0.0, "identity of indiscernibles");
  }
  v.detail << " quantile gap " << g(line) << ", enumeration gap " << g(lp) << ", symmetry " << g(sym)
           << ", triangle excess " << g(tri) << ";";
  v.require(line <= 1e-10, "quantile formula");
  v.require(lp <= 1e-10, "enumeration");
  v.require(sym <= 1e-12, "symmetry");
  v.require(tri <= 1e-10, "triangle inequality");
}

// ---- 9 ----------------------------------------------------------------------

struct Equilibrium {
  FixedPointResult fp;
  MildSolution mild;
  LipschitzReport lip;
};

Equilibrium solve_crowd(int N, const TrajectoryMeasure* eta0 = nullptr, double tol = 1e-3) {
  auto coupling = std::make_shared<KernelCoupling>(1.0, 0.5);
  MfgOptions opt;
  opt.N = N;
  opt.tol = tol;
  Equilibrium e;
  e.fp = fixed_point(crowd_problem(), disk(), coupling, crowd_m0(), opt, eta0);
  ValueOptions vo;
  vo.N = N;
  e.mild = mild_solution(crowd_problem(), disk(), coupling, e.fp.eta, uniform_times(1.0, 3), value_points(disk(), 7), vo);
  e.lip = lipschitz_report(e.mild.u);
  return e;
}

double sup_gap(const ValueGrid& a, const ValueGrid& b) {
  return (a.values - b.values).cwiseAbs().maxCoeff();
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + 1e-6; }

void crowd(Verdict& v) {
  auto coupling = std::make_shared<KernelCoupling>(1.0, 0.5);
  const Equilibrium e = solve_crowd(64);
  const auto& fp = e.fp;
  const double res = fp.history.back();
  const double lip = lip_flow(evaluate_flow(fp.eta, flow_times(fp.eta)));
  MfgOptions opt;
  const Certificate cert = equilibrium_certificate(crowd_problem(), disk(), coupling, fp.eta, opt);
  v.detail << " " << fp.iterations << " iterations, residual " << g(res) << ", Lip(m) " << g(lip) << " <= 1.05 L0 "
           << g(1.05 * fp.L0) << ", certificate gap " << g(cert.max_gap) << ", Lx " << g(e.lip.Lx) << ", Lt "
           << g(e.lip.Lt) << ";";
  v.require(res <= 1e-3 && fp.iterations <= 50, "fixed point residual");
  v.require(lip <= 1.05 * fp.L0 && e.mild.lip_m <= 1.05 * e.mild.L0, "Lip(m)");
  v.require(cert.max_gap <= 1e-3, "certificate");
  v.require(e.mild.u.failures.empty(), "mild solution nodes");
  v.require(std::isfinite(e.lip.Lx) && std::isfinite(e.lip.Lt), "finite constants");

  const Equilibrium f = solve_crowd(128);
  const double ugap = sup_gap(e.mild.u, f.mild.u);
  double flow_gap = 0.0;
  for (double t : uniform_times(1.0, 9))
    flow_gap = std::max(flow_gap, kantorovich_d1(evaluate_at(e.fp.eta, t), evaluate_at(f.fp.eta, t)));
  v.detail << " N = 128: u gap " << g(ugap) << ", flow gap " << g(flow_gap) << ", Lx " << g(f.lip.Lx) << ", Lt "
           << g(f.lip.Lt) << ";";
  v.require(ugap <= 1e-2 && flow_gap <= 1e-2, "refinement of u and m");
  v.require(close_rel(e.lip.Lx, f.lip.Lx, 0.1) && close_rel(e.lip.Lt, f.lip.Lt, 0.1), "refinement of Lx, Lt");
}

// ---- 10 ---------------------------------------------------------------------

void uniqueness(Verdict& v) {
  // Second start: every atom travels straight toward the centre.
  const DiscreteMeasure m0 = crowd_m0();
  const int N = 64;
  TrajectoryMeasure eta0 = constant_measure(m0, 1.0, N);
  for (auto& p : eta0.particles)
    for (int k = 0; k <= N; ++k) p.gamma.knots[k] = m0.points[p.atom] * (1.0 - p.gamma.time(k));
  const Equilibrium a = solve_crowd(N);
  const Equilibrium b = solve_crowd(N, &eta0);
  const double start_gap = flow_distance(constant_measure(m0, 1.0, N), eta0);
  const double ugap = sup_gap(a.mild.u, b.mild.u);
  v.detail << " initial flow distance " << g(start_gap) << ", iterations " << a.fp.iterations << " and "
           << b.fp.iterations << ", u gap " << g(ugap) << ";";
  v.require(start_gap > 0.1, "distinct starts");
  v.require(ugap <= 2e-3, "value functions agree");
}

// ---- 11 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void determinism(Verdict& v, const fs::path& scenarios) {
  const fs::path root = fs::temp_directory_path() / "sccv_acceptance";
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
      {"S1", {"solve", "pmp-check", "geometry-test", "assumptions"}},
      {"S2", {"solve", "value"}},
      {"S3", {"solve", "pmp-check", "geometry-test"}},
      {"S4", {"mfg", "assumptions"}}};
  int files = 0;
  for (const auto& [sc, cmds] : runs) {
    const std::string cfg = (scenarios / (sc + ".json")).string();
    for (int rep = 0; rep < 2; ++rep) {
      const std::string out = (root / (sc + "_" + std::to_string(rep))).string();
      for (const auto& cmd : cmds) {
        // Different worker counts must not change a byte.
        std::ostringstream summary;
        const int rc =
            cli::run({"sccv", cmd, "--config", cfg, "--out", out, "--threads", rep ? "3" : "1"}, summary);
        v.require(rc == 0, sc + " " + cmd + " exit " + std::to_string(rc));
      }
    }
    const fs::path a = root / (sc + "_0"), b = root / (sc + "_1");
    for (const auto& entry : fs::directory_iterator(a)) {
      ++files;
      const fs::path other = b / entry.path().filename();
      v.require(fs::exists(other) && slurp(entry.path()) == slurp(other), sc + " " + entry.path().filename().string());
    }
  }
  v.detail << " " << files << " output files compared byte for byte;";
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  setenv("CVX_LOG", "warn", 0);
  spdlog::set_level(spdlog::level::warn);
  const fs::path scenarios = argc > 1 ? fs::path(argv[1]) : fs::path(SCCV_SCENARIO_DIR);
  struct Criterion {
    int id;
    const char* title;
    double limit;  // seconds
    std::function<void(Verdict&)> run;
  };
  const std::vector<Criterion> all = {
      {1, "geometry invariants", 5, geometry},
      {2, "Legendre involution and duality", 5, legendre_identities},
      {3, "S2 closed form", 60, interior_closed_form},
      {4, "S1 containment and oracle cost", 120, containment},
      {5, "S1/S3 maximum principle suite", 180, pmp_suite},
      {6, "Hamiltonian conservation on S1", 10, conservation},
      {7, "energy and Hoelder bounds", 1e9, energy_holder},
      {8, "d1 correctness", 10, d1_correctness},
      {9, "S4 equilibrium", 900, crowd},
      {10, "monotone uniqueness probe", 1800, uniqueness},
      {11, "determinism", 1e9, [&](Verdict& v) { determinism(v, scenarios); }},
  };
  int failed = 0;
  for (const auto& c : all) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit) {
      v.pass = false;
      v.detail << " [runtime over " << c.limit << " s]";
    }
    if (!v.pass) ++failed;
    std::printf("criterion %2d %s: %s (%.1f s)%s\n", c.id, v.pass ? "PASS" : "FAIL", c.title, secs,
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
