#include "commands.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "config.hpp"
#include "io.hpp"
#include "sccv/errors.hpp"

namespace sccv::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Flags {
  std::string config;
  std::string out = ".";
  int grid_n = 0;
  long long seed = -1;
  int threads = -1;
  std::string trajectory;  // pmp-check only
};

struct Outcome {
  int code = kOk;
  std::string summary;
};

ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ojson list_json(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(x);
  return a;
}

ojson check_json(const InequalityCheck& c) {
  return ojson{{"name", c.name}, {"pass", c.pass}, {"worst_margin", c.worst_margin}};
}

ojson pmp_json(const PmpReport& r) {
  ojson checks = ojson::array();
  for (const auto& c : r.checks)
    checks.push_back(ojson{{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"pass", c.pass}});
  return ojson{{"passed", r.passed()},
               {"checks", checks},
               {"state_residual", r.state_residual},
               {"adjoint_residual", r.adjoint_residual},
               {"transversality", r.transversality},
               {"lambda_agreement", r.lambda_agreement},
               {"min_lam", r.min_lam},
               {"max_lam", r.max_lam},
               {"r_variation", r.r_variation},
               {"drift_integral", r.drift_integral},
               {"max_speed", r.max_speed},
               {"max_second_difference", r.max_second_difference},
               {"p_bound_ratio", r.p_bound_ratio},
               {"contact_knots", r.contact_knots}};
}

ojson extremal_json(const Extremal& ex) {
  return ojson{{"epsilon", ex.epsilon}, {"delta", ex.delta}, {"nu", ex.nu},      {"pT", vec_json(ex.pT)},
               {"Lstar", ex.Lstar},     {"K", ex.K},         {"C1", ex.C1},      {"N_sup", ex.N_sup}};
}

ojson lipschitz_json(const LipschitzReport& l) {
  return ojson{{"Lx", l.Lx}, {"Lt", l.Lt}, {"Lt_interior", l.Lt_interior}};
}

std::vector<std::string> coord_names(const char* prefix, int n) {
  std::vector<std::string> v;
  for (int i = 1; i <= n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

std::vector<Point> grid_points(const Domain& dom, const ValueBlock& vb) {
  return vb.points.empty() ? value_points(dom, vb.per_axis) : vb.points;
}

CsvTable value_table(const ValueGrid& vg, int n) {
  CsvTable t;
  t.header = {"t"};
  for (auto& c : coord_names("x", n)) t.header.push_back(c);
  t.header.push_back("u");
  for (std::size_t i = 0; i < vg.times.size(); ++i)
    for (std::size_t j = 0; j < vg.points.size(); ++j) {
      std::vector<double> row{vg.times[i]};
      for (int d = 0; d < n; ++d) row.push_back(vg.points[j][d]);
      row.push_back(vg.values(static_cast<int>(i), static_cast<int>(j)));
      t.rows.push_back(std::move(row));
    }
  return t;
}

// Largest |u_a - u_b| over nodes where both are finite.
double sup_gap(const ValueGrid& a, const ValueGrid& b) {
  double gap = 0.0;
  for (int i = 0; i < a.values.rows(); ++i)
    for (int j = 0; j < a.values.cols(); ++j) {
      const double x = a.values(i, j), y = b.values(i, j);
      if (std::isfinite(x) && std::isfinite(y)) gap = std::max(gap, std::abs(x - y));
    }
  return gap;
}

ojson failures_json(const ValueGrid& vg) {
  ojson a = ojson::array();
  for (const auto& f : vg.failures)
    a.push_back(ojson{{"time_index", f.time_index}, {"point_index", f.point_index}, {"message", f.message}});
  return a;
}

std::string fmt(double x) { return format_double(x); }

// ---- solve ----------------------------------------------------------------

Outcome cmd_solve(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.x0) throw Error(ErrorCode::InvalidConfig, "x0: required by solve");
  const Domain& dom = *cfg.domain;
  const Problem& prob = cfg.problem;
  const int n = dom.dim();
  const DeltaChoice dc = delta_choice(prob, dom);
  const double delta = cfg.delta > 0.0 ? cfg.delta : dc.delta;
  spdlog::info("solve: N = {}, delta = {}", cfg.N, delta);

  const ScheduleResult sched = epsilon_schedule(prob, dom, *cfg.x0, delta, cfg.N, cfg.solver);
  const Extremal ex = build_extremal(prob, dom, sched.gamma, sched.params, cfg.pmp.options);
  const PmpReport rep = check_extremal(prob, dom, ex, cfg.pmp.options, cfg.pmp.adjoint_tol);

  const Trajectory& g = sched.gamma;
  CsvTable traj;
  traj.header = {"t"};
  for (auto& c : coord_names("x", n)) traj.header.push_back(c);
  for (auto& c : coord_names("v", n)) traj.header.push_back(c);
  traj.header.push_back("d");
  for (int k = 0; k <= g.N(); ++k) {
    std::vector<double> row{g.time(k)};
    for (int d = 0; d < n; ++d) row.push_back(g.knots[k][d]);
    const Vec v = g.knot_velocity(k);
    for (int d = 0; d < n; ++d) row.push_back(v[d]);
    row.push_back(distance(dom, g.knots[k]));
    traj.rows.push_back(std::move(row));
  }
  write_csv((out / "trajectory.csv").string(), traj);

  const double energy = penalized_energy(prob, dom, sched.params.epsilon, g);
  const double holder = holder_half_ratio(g);
  const double holder_bound = std::sqrt(4.0 * prob.mu * ex.K);
  ojson j{{"N", cfg.N},
          {"epsilon", sched.params.epsilon},
          {"delta", sched.params.delta},
          {"rho", sched.params.rho},
          {"cost", sched.report.cost},
          {"stationarity", sched.report.stationarity},
          {"converged", sched.report.converged},
          {"max_distance", sched.max_distance},
          {"epsilons", list_json(sched.epsilons)},
          {"max_distances", list_json(sched.max_distances)},
          {"energy", ojson{{"value", energy}, {"bound", 1.05 * ex.K}, {"pass", energy <= 1.05 * ex.K}}},
          {"holder", ojson{{"value", holder}, {"bound", holder_bound}, {"pass", holder <= holder_bound}}},
          {"extremal", extremal_json(ex)},
          {"pmp", pmp_json(rep)}};
  write_json((out / "solve.json").string(), j);

  return {kOk, "solve: cost " + fmt(sched.report.cost) + ", epsilon " + fmt(sched.params.epsilon) +
                   ", max distance " + fmt(sched.max_distance) + ", pmp " + (rep.passed() ? "pass" : "FAIL")};
}

// ---- pmp-check --------------------------------------------------------------

Trajectory trajectory_from_csv(const CsvTable& t, int n, const std::string& path) {
  const int ct = t.column("t");
  if (ct < 0) throw Error(ErrorCode::InvalidTrajectory, path + ": missing column t");
  std::vector<int> cx;
  for (auto& name : coord_names("x", n)) {
    cx.push_back(t.column(name));
    if (cx.back() < 0) throw Error(ErrorCode::InvalidTrajectory, path + ": missing column " + name);
  }
  if (t.rows.size() < 9) throw Error(ErrorCode::InvalidTrajectory, path + ": needs at least 9 knots");
  Trajectory g;
  g.t0 = t.rows.front()[ct];
  g.t1 = t.rows.back()[ct];
  for (const auto& row : t.rows) {
    Point x(n);
    for (int d = 0; d < n; ++d) x[d] = row[cx[d]];
    g.knots.push_back(x);
  }
  g.validate();
  for (int k = 0; k <= g.N(); ++k)
    if (std::abs(t.rows[k][ct] - g.time(k)) > 1e-9 * (g.t1 - g.t0))
      throw Error(ErrorCode::InvalidTrajectory, path + ": knot times are not uniform at row " + std::to_string(k + 2));
  return g;
}

Outcome cmd_pmp_check(const RunConfig& cfg, const fs::path& out, const std::string& traj_flag) {
  const Domain& dom = *cfg.domain;
  const Problem& prob = cfg.problem;
  const int n = dom.dim();
  fs::path path = !traj_flag.empty()              ? fs::path(traj_flag)
                  : !cfg.pmp.trajectory.empty()   ? fs::path(cfg.pmp.trajectory)
                                                  : out / "trajectory.csv";
  const Trajectory g = trajectory_from_csv(read_csv(path.string()), n, path.string());
  if (std::abs(g.t1 - prob.horizon) > 1e-12 * prob.horizon)
    throw Error(ErrorCode::InvalidTrajectory, path.string() + ": final time differs from the horizon");

  PenaltyParams params;
  params.N = g.N();
  params.epsilon = cfg.pmp.epsilon;
  params.delta = cfg.pmp.delta;
  if (params.epsilon <= 0.0 || params.delta <= 0.0) {
    const fs::path sibling = path.parent_path() / "solve.json";
    std::ifstream f(sibling);
    if (!f)
      throw Error(ErrorCode::InvalidConfig,
                  "pmp.epsilon and pmp.delta: not set and no solve.json next to " + path.string());
    nlohmann::json s;
    try {
      f >> s;
      if (params.epsilon <= 0.0) params.epsilon = s.at("epsilon").get<double>();
      if (params.delta <= 0.0) params.delta = s.at("delta").get<double>();
      params.rho = s.value("rho", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, sibling.string() + ": " + e.what());
    }
  }
  params.validate(dom);

  const Extremal ex = build_extremal(prob, dom, g, params, cfg.pmp.options);
  const PmpReport rep = check_extremal(prob, dom, ex, cfg.pmp.options, cfg.pmp.adjoint_tol);

  CsvTable t;
  t.header = {"t"};
  for (auto& c : coord_names("x", n)) t.header.push_back(c);
  for (auto& c : coord_names("p", n)) t.header.push_back(c);
  t.header.push_back("lam");
  t.header.push_back("d");
  for (int k = 0; k <= g.N(); ++k) {
    std::vector<double> row{g.time(k)};
    for (int d = 0; d < n; ++d) row.push_back(g.knots[k][d]);
    for (int d = 0; d < n; ++d) row.push_back(ex.p[k][d]);
    row.push_back(ex.lam[k]);
    row.push_back(distance(dom, g.knots[k]));
    t.rows.push_back(std::move(row));
  }
  write_csv((out / "extremal.csv").string(), t);
  write_json((out / "pmp.json").string(), ojson{{"N", g.N()}, {"extremal", extremal_json(ex)}, {"pmp", pmp_json(rep)}});

  std::string failed;
  for (const auto& c : rep.checks)
    if (!c.pass) failed += (failed.empty() ? "" : " ") + c.name;
  return {rep.passed() ? kOk : kValidation,
          "pmp-check: " + std::to_string(rep.checks.size()) + " checks, " +
              (rep.passed() ? std::string("all pass") : "failed: " + failed)};
}

// ---- value ------------------------------------------------------------------

Outcome cmd_value(const RunConfig& cfg, const fs::path& out) {
  const Domain& dom = *cfg.domain;
  const Problem& prob = cfg.problem;
  const ValueBlock& vb = cfg.value;
  ValueOptions vo;
  vo.N = vb.N;
  vo.threads = cfg.threads;
  vo.delta = cfg.delta;
  vo.solver = cfg.solver;
  vo.keep_arcs = true;
  const auto times = uniform_times(prob.horizon, vb.times);
  const auto points = grid_points(dom, vb);
  spdlog::info("value: {} times x {} points, N = {}", times.size(), points.size(), vo.N);

  const ValueGrid vg = compute_value(prob, dom, times, points, vo);
  write_csv((out / "value.csv").string(), value_table(vg, dom.dim()));

  ojson j{{"N", vg.N}, {"delta", vg.delta}, {"times", static_cast<int>(vg.times.size())},
          {"points", static_cast<int>(vg.points.size())}, {"failures", failures_json(vg)}};
  if (!vg.failures.empty()) {
    write_json((out / "value.json").string(), j);
    return {kSolver, "value: " + std::to_string(vg.failures.size()) + " node solves failed"};
  }
  const LipschitzReport lr = lipschitz_report(vg);
  j["lipschitz"] = lipschitz_json(lr);
  const double dpp = dpp_check(prob, dom, vg, vb.dpp_samples, cfg.seed, cfg.solver);
  j["dpp_gap"] = dpp;
  if (vb.refinement) {
    ValueOptions half = vo;
    half.N = vo.N / 2;
    half.keep_arcs = false;
    const ValueGrid coarse = compute_value(prob, dom, times, vg.points, half);
    const LipschitzReport lc = lipschitz_report(coarse);
    j["refinement"] = ojson{{"N", half.N}, {"sup_gap", sup_gap(vg, coarse)}, {"lipschitz", lipschitz_json(lc)},
                            {"failures", failures_json(coarse)}};
  }
  write_json((out / "value.json").string(), j);
  return {kOk, "value: Lx " + fmt(lr.Lx) + ", Lt " + fmt(lr.Lt) + ", dpp gap " + fmt(dpp)};
}

// ---- mfg --------------------------------------------------------------------

CsvTable residual_table(const std::vector<double>& history) {
  CsvTable t;
  t.header = {"iteration", "residual"};
  for (std::size_t i = 0; i < history.size(); ++i) t.rows.push_back({static_cast<double>(i + 1), history[i]});
  return t;
}

Outcome cmd_mfg(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.mfg) throw Error(ErrorCode::InvalidConfig, "mfg: block required by the mfg subcommand");
  const Domain& dom = *cfg.domain;
  const Problem& prob = cfg.problem;
  const MfgBlock& mb = *cfg.mfg;
  const int n = dom.dim();
  MfgOptions opt = mb.options;
  opt.threads = cfg.threads;
  opt.solver = cfg.solver;
  const auto coupling = make_coupling(mb);

  FixedPointResult fp;
  try {
    fp = fixed_point(prob, dom, coupling, mb.m0, opt);
  } catch (const NoConvergenceError& e) {
    write_csv((out / "residuals.csv").string(), residual_table(e.history()));
    write_json((out / "mfg.json").string(),
               ojson{{"converged", false}, {"iterations", static_cast<int>(e.history().size())},
                     {"residual_history", list_json(e.history())}});
    throw;
  }
  write_csv((out / "residuals.csv").string(), residual_table(fp.history));
  spdlog::info("mfg: fixed point after {} iterations", fp.iterations);

  CsvTable flow;
  flow.header = {"t", "atom"};
  for (auto& c : coord_names("x", n)) flow.header.push_back(c);
  flow.header.push_back("weight");
  const auto& parts = fp.eta.particles;
  for (int k = 0; k <= parts.front().gamma.N(); ++k)
    for (const auto& p : parts) {
      std::vector<double> row{p.gamma.time(k), static_cast<double>(p.atom)};
      for (int d = 0; d < n; ++d) row.push_back(p.gamma.knots[k][d]);
      row.push_back(p.weight);
      flow.rows.push_back(std::move(row));
    }
  write_csv((out / "flow.csv").string(), flow);

  const Certificate cert = equilibrium_certificate(prob, dom, coupling, fp.eta, opt);

  ValueOptions vo;
  vo.N = mb.value.N;
  vo.threads = cfg.threads;
  vo.delta = cfg.delta;
  vo.solver = cfg.solver;
  const auto times = uniform_times(prob.horizon, mb.value.times);
  const auto points = grid_points(dom, mb.value);
  const MildSolution ms = mild_solution(prob, dom, coupling, fp.eta, times, points, vo);
  write_csv((out / "mild_value.csv").string(), value_table(ms.u, n));

  const CouplingReport cr = check_coupling(*coupling, dom, 200, cfg.seed);
  ojson j{{"converged", true},
          {"iterations", fp.iterations},
          {"residual", fp.history.back()},
          {"residual_history", list_json(fp.history)},
          {"L0", fp.L0},
          {"flow_speed_bound", flow_speed_bound(fp.eta)},
          {"lip_m", ms.lip_m},
          {"lip_m_bound", 1.05 * ms.L0},
          {"certificate", ojson{{"max_gap", cert.max_gap},
                                {"residual", cert.residual},
                                {"max_speed", cert.max_speed},
                                {"L0", cert.L0},
                                {"particle_costs", list_json(cert.particle_costs)},
                                {"optimal_costs", list_json(cert.optimal_costs)}}},
          {"coupling_check", ojson{{"passed", cr.passed()},
                                   {"lipschitz_in_m", check_json(cr.lipschitz_in_m)},
                                   {"gradient_bound", check_json(cr.gradient_bound)}}},
          {"mild", ojson{{"N", ms.u.N}, {"failures", failures_json(ms.u)}}}};
  if (!ms.u.failures.empty()) {
    write_json((out / "mfg.json").string(), j);
    return {kSolver, "mfg: " + std::to_string(ms.u.failures.size()) + " mild-solution node solves failed"};
  }
  const LipschitzReport lr = lipschitz_report(ms.u);
  j["mild"]["lipschitz"] = lipschitz_json(lr);
  if (mb.value.refinement) {
    ValueOptions half = vo;
    half.N = vo.N / 2;
    half.keep_arcs = false;
    const MildSolution coarse = mild_solution(prob, dom, coupling, fp.eta, times, ms.u.points, half);
    j["mild"]["refinement"] = ojson{{"N", half.N},
                                    {"sup_gap", sup_gap(ms.u, coarse.u)},
                                    {"lipschitz", lipschitz_json(lipschitz_report(coarse.u))},
                                    {"failures", failures_json(coarse.u)}};
  }
  write_json((out / "mfg.json").string(), j);
  return {kOk, "mfg: " + std::to_string(fp.iterations) + " iterations, residual " + fmt(fp.history.back()) +
                   ", certificate gap " + fmt(cert.max_gap) + ", Lip(m) " + fmt(ms.lip_m) + " <= 1.05 L0 " +
                   fmt(1.05 * ms.L0)};
}

// ---- geometry-test ----------------------------------------------------------

Outcome cmd_geometry(const RunConfig& cfg, const fs::path& out) {
  const GeometryReport r = geometry_invariants(*cfg.domain, cfg.geometry_samples, cfg.seed);
  write_json((out / "geometry.json").string(),
             ojson{{"passed", r.passed()},
                   {"samples", r.samples},
                   {"fd_points", r.fd_points},
                   {"unit_gradient", r.unit_gradient},
                   {"hessian_null", r.hessian_null},
                   {"hessian_symmetry", r.hessian_symmetry},
                   {"projection", r.projection},
                   {"fd_gradient", r.fd_gradient},
                   {"fd_hessian", r.fd_hessian},
                   {"subdiff_checked", r.subdiff_checked},
                   {"subdiff_mismatches", r.subdiff_mismatches}});
  return {r.passed() ? kOk : kValidation, "geometry-test: " + std::to_string(r.samples) + " samples, " +
                                              (r.passed() ? "all invariants hold" : "invariants FAIL")};
}

// ---- assumptions ------------------------------------------------------------

Outcome cmd_assumptions(const RunConfig& cfg, const fs::path& out) {
  const Domain& dom = *cfg.domain;
  const Problem& prob = cfg.problem;
  AssumptionOptions ao = cfg.assumptions;
  ao.seed = cfg.seed;
  const AssumptionReport rep = check_assumptions(prob, dom, ao);
  const double K = energy_bound(prob, rep);
  const DeltaChoice dc = delta_choice(prob, dom);
  const double delta = cfg.delta > 0.0 ? cfg.delta : dc.delta;
  const double C1 = c1_constant(prob, rep, K);

  ojson checks = ojson::array();
  for (const auto& c : rep.checks) checks.push_back(check_json(c));
  bool passed = rep.passed();
  ojson j{{"passed", passed},
          {"checks", checks},
          {"M_measured", rep.M_measured},
          {"C_mu_M", rep.C_mu_M},
          {"M_prime", rep.M_prime},
          {"C_mu_Mprime", rep.C_mu_Mprime},
          {"fvv_eig", ojson::array({rep.fvv_min_eig, rep.fvv_max_eig})},
          {"Hpp_eig", ojson::array({rep.Hpp_min_eig, rep.Hpp_max_eig})},
          {"sup_abs_g", rep.sup_abs_g},
          {"sup_Dg", rep.sup_Dg},
          {"K", K},
          {"delta", delta},
          {"N_sup", dc.N_sup},
          {"C1", C1},
          {"Lstar", lstar_bound(prob, rep, K, delta)}};
  if (cfg.mfg) {
    const CouplingReport cr = check_coupling(*make_coupling(*cfg.mfg), dom, 200, cfg.seed);
    j["coupling_check"] = ojson{{"passed", cr.passed()},
                                {"lipschitz_in_m", check_json(cr.lipschitz_in_m)},
                                {"gradient_bound", check_json(cr.gradient_bound)}};
    passed = passed && cr.passed();
    j["passed"] = passed;
  }
  write_json((out / "assumptions.json").string(), j);
  std::string failed;
  for (const auto& c : rep.checks)
    if (!c.pass) failed += " " + c.name;
  return {passed ? kOk : kValidation,
          "assumptions: " + (passed ? std::string("all hold") : "violated:" + failed) + ", L* " +
              fmt(lstar_bound(prob, rep, K, delta))};
}

// Input and parameter errors are validation failures, the rest solver failures.
int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidProblem:
    case ErrorCode::InvalidTrajectory:
    case ErrorCode::UnbalancedMeasure:
    case ErrorCode::SigmaTooLarge:
      return kValidation;
    default:
      return kSolver;
  }
}

void setup_logging() {
  auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
  auto logger = std::make_shared<spdlog::logger>("sccv", sink);
  logger->set_pattern("[%l] %v");
  auto level = spdlog::level::info;
  if (const char* env = std::getenv("CVX_LOG"); env && *env) {
    const std::string s = env;
    level = spdlog::level::from_str(s);
    if (level == spdlog::level::off && s != "off") {
      std::cerr << "CVX_LOG=" << s << " is not a level (trace, debug, info, warn, error, critical, off); using info\n";
      level = spdlog::level::info;
    }
  }
  logger->set_level(level);
  spdlog::set_default_logger(logger);
}

}  // namespace

namespace {

int run_impl(int argc, const char* const* argv, std::ostream& summary) {
  setup_logging();
  CLI::App app{"State-constrained variational solver"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"solve", "minimize from x0 and certify the extremal"},
      {"pmp-check", "certify a trajectory CSV against the maximum principle"},
      {"value", "value function on a time x space grid"},
      {"mfg", "damped fixed point for the mean-field equilibrium"},
      {"geometry-test", "sampled invariants of the boundary distance"},
      {"assumptions", "sample the structural assumptions and report the constants"}};
  for (const auto& [name, help] : subs) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", flags.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    s->add_option("--out", flags.out, "output directory, created if missing");
    s->add_option("--grid-n", flags.grid_n, "override the trajectory intervals")->check(CLI::Range(8, 1 << 20));
    s->add_option("--seed", flags.seed, "override the sampling seed")->check(CLI::NonNegativeNumber);
    s->add_option("--threads", flags.threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
    if (name == "pmp-check")
      s->add_option("--trajectory", flags.trajectory, "trajectory CSV, default <out>/trajectory.csv");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg = load_config(flags.config);
    if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.threads >= 0) cfg.threads = flags.threads;
    if (flags.grid_n > 0) {
      cfg.N = flags.grid_n;
      cfg.value.N = flags.grid_n;
      if (cfg.mfg) cfg.mfg->options.N = flags.grid_n;
    }
    const fs::path out(flags.out);
    fs::create_directories(out);

    Outcome o;
    if (cmd == "solve") o = cmd_solve(cfg, out);
    else if (cmd == "pmp-check") o = cmd_pmp_check(cfg, out, flags.trajectory);
    else if (cmd == "value") o = cmd_value(cfg, out);
    else if (cmd == "mfg") o = cmd_mfg(cfg, out);
    else if (cmd == "geometry-test") o = cmd_geometry(cfg, out);
    else o = cmd_assumptions(cfg, out);
    summary << o.summary << std::endl;
    return o.code;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    const int rc = exit_code_for(e.code());
    summary << cmd << ": " << (rc == kValidation ? "invalid input: " : "solver failure: ") << e.what()
              << std::endl;
    return rc;
  } catch (const fs::filesystem_error& e) {
    summary << cmd << ": invalid input: " << e.what() << std::endl;
    return kValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    summary << cmd << ": solver failure: " << e.what() << std::endl;
    return kSolver;
  }
}

}  // namespace

int run(int argc, const char* const* argv) { return run_impl(argc, argv, std::cout); }

int run(const std::vector<std::string>& args, std::ostream& summary) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_impl(static_cast<int>(argv.size()), argv.data(), summary);
}

}  // namespace sccv::cli
