#include "config.hpp"

#include <fstream>
#include <sstream>

#include "sccv/errors.hpp"

namespace sccv::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, key + ": " + why);
}

const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) bad(where + key, "missing required key");
  return j.at(key);
}

double number(const json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) bad(key, "expected an integer");
  return j.get<int>();
}

Vec vector(const json& j, const std::string& key, int dim = -1) {
  if (!j.is_array() || j.empty()) bad(key, "expected a nonempty array of numbers");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = number(j[i], key);
  if (dim > 0 && v.size() != dim) bad(key, "expected " + std::to_string(dim) + " entries");
  return v;
}

Mat matrix(const json& j, const std::string& key, int dim) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) bad(key, "expected a " + std::to_string(dim) + " x " +
                                                                       std::to_string(dim) + " array");
  Mat A(dim, dim);
  for (int i = 0; i < dim; ++i) A.row(i) = vector(j[i], key, dim).transpose();
  return A;
}

template <class T, class F>
T get_or(const json& j, const std::string& key, T fallback, F&& read) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return read(j.at(key), key);
}

double num_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return get_or(j, key, fallback, [&](const json& v, const std::string& k) { return number(v, where + k); });
}

int int_or(const json& j, const std::string& key, int fallback, const std::string& where) {
  return get_or(j, key, fallback, [&](const json& v, const std::string& k) { return integer(v, where + k); });
}

Domain parse_domain(const json& j) {
  const std::string shape = need(j, "shape", "domain.").is_string() ? j.at("shape").get<std::string>() : "";
  const Vec c = vector(need(j, "center", "domain."), "domain.center");
  if (shape == "ball") return Domain::ball(c, number(need(j, "radius", "domain."), "domain.radius"));
  if (shape == "ellipse") return Domain::ellipse(c, vector(need(j, "semi_axes", "domain."), "domain.semi_axes", c.size()));
  if (shape == "smoothed_box")
    return Domain::smoothed_box(c, vector(need(j, "half_widths", "domain."), "domain.half_widths", c.size()),
                                number(need(j, "corner_radius", "domain."), "domain.corner_radius"));
  bad("domain.shape", "expected one of ball, ellipse, smoothed_box");
}

Potential parse_potential(const json& j, int n, const std::string& key) {
  const std::string type = need(j, "type", key + ".").is_string() ? j.at("type").get<std::string>() : "";
  if (type == "linear") return LinearPotential{vector(need(j, "a", key + "."), key + ".a", n)};
  if (type == "quadratic")
    return QuadraticPotential{matrix(need(j, "Q", key + "."), key + ".Q", n),
                              j.contains("center") ? vector(j.at("center"), key + ".center", n) : Vec(Vec::Zero(n))};
  if (type == "gaussian")
    return GaussianPotential{vector(need(j, "center", key + "."), key + ".center", n),
                             number(need(j, "amplitude", key + "."), key + ".amplitude"),
                             number(need(j, "width", key + "."), key + ".width")};
  bad(key + ".type", "expected one of linear, quadratic, gaussian");
}

Problem parse_problem(const json& j, int n) {
  Problem p;
  p.horizon = num_or(j, "horizon", 1.0, "problem.");
  p.mu = num_or(j, "mu", 1.0, "problem.");
  p.M = num_or(j, "M", 0.0, "problem.");
  p.kappa = num_or(j, "kappa", 0.0, "problem.");

  const json L = j.contains("lagrangian") ? j.at("lagrangian") : json::object();
  const Mat A0 = L.contains("A0") ? matrix(L.at("A0"), "problem.lagrangian.A0", n) : Mat(Mat::Identity(n, n));
  const double alpha = num_or(L, "alpha", 0.0, "problem.lagrangian.");
  const Vec c0 = L.contains("c0") ? vector(L.at("c0"), "problem.lagrangian.c0", n) : Vec(Vec::Zero(n));
  const Vec c1 = L.contains("c1") ? vector(L.at("c1"), "problem.lagrangian.c1", n) : Vec(Vec::Zero(n));
  std::vector<Potential> pots;
  if (L.contains("potentials")) {
    const json& arr = L.at("potentials");
    if (!arr.is_array()) bad("problem.lagrangian.potentials", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      pots.push_back(parse_potential(arr[i], n, "problem.lagrangian.potentials[" + std::to_string(i) + "]"));
  }
  p.lagrangian = std::make_shared<QuadraticLagrangian>(A0, alpha, c0, c1, std::move(pots));

  const json g = j.contains("terminal") ? j.at("terminal") : json::object();
  const Mat Q = g.contains("Q") ? matrix(g.at("Q"), "problem.terminal.Q", n) : Mat(Mat::Zero(n, n));
  const Vec a = g.contains("a") ? vector(g.at("a"), "problem.terminal.a", n) : Vec(Vec::Zero(n));
  p.terminal = std::make_shared<QuadraticTerminal>(Q, a, num_or(g, "c", 0.0, "problem.terminal."));
  p.validate();
  return p;
}

ValueBlock parse_value(const json& j, const std::string& where, int n) {
  ValueBlock v;
  v.times = int_or(j, "times", v.times, where);
  v.per_axis = int_or(j, "per_axis", v.per_axis, where);
  v.N = int_or(j, "N", v.N, where);
  v.dpp_samples = int_or(j, "dpp_samples", v.dpp_samples, where);
  if (j.contains("refinement")) {
    if (!j.at("refinement").is_boolean()) bad(where + "refinement", "expected true or false");
    v.refinement = j.at("refinement").get<bool>();
  }
  if (j.contains("points")) {
    const json& arr = j.at("points");
    if (!arr.is_array()) bad(where + "points", "expected an array of points");
    for (const auto& p : arr) v.points.push_back(vector(p, where + "points", n));
  }
  if (v.times < 2) bad(where + "times", "needs at least 2 slices");
  if (v.per_axis < 2 && v.points.empty()) bad(where + "per_axis", "needs at least 2 nodes per axis");
  if (v.N < 8) bad(where + "N", "needs at least 8 intervals");
  return v;
}

SolverOptions parse_solver(const json& j, RunConfig& cfg) {
  SolverOptions s;
  cfg.N = int_or(j, "N", cfg.N, "solver.");
  cfg.delta = num_or(j, "delta", cfg.delta, "solver.");
  s.tol_grad = num_or(j, "tol_grad", s.tol_grad, "solver.");
  s.max_iterations = int_or(j, "max_iterations", s.max_iterations, "solver.");
  s.feasibility_tol = num_or(j, "feasibility_tol", s.feasibility_tol, "solver.");
  s.max_halvings = int_or(j, "max_halvings", s.max_halvings, "solver.");
  s.epsilon_start = num_or(j, "epsilon_start", s.epsilon_start, "solver.");
  if (cfg.N < 8) bad("solver.N", "needs at least 8 intervals");
  if (cfg.delta < 0.0 || cfg.delta > 1.0) bad("solver.delta", "must lie in (0, 1], or 0 for the automatic choice");
  if (!(s.epsilon_start > 0.0)) bad("solver.epsilon_start", "must be > 0");
  return s;
}

}  // namespace

RunConfig parse_config(const json& j) {
  if (!j.is_object()) bad("config", "expected a JSON object");
  RunConfig cfg;
  cfg.domain = parse_domain(need(j, "domain", ""));
  const int n = cfg.domain->dim();
  cfg.problem = parse_problem(need(j, "problem", ""), n);
  if (j.contains("x0")) {
    cfg.x0 = vector(j.at("x0"), "x0", n);
    if (cfg.domain->b(*cfg.x0) > cfg.domain->tau_bdry()) bad("x0", "lies outside the closed set");
  }
  cfg.solver = parse_solver(j.contains("solver") ? j.at("solver") : json::object(), cfg);

  const json pm = j.contains("pmp") ? j.at("pmp") : json::object();
  cfg.pmp.options.contact_tol = num_or(pm, "contact_tol", cfg.pmp.options.contact_tol, "pmp.");
  cfg.pmp.options.junction_window = int_or(pm, "junction_window", cfg.pmp.options.junction_window, "pmp.");
  cfg.pmp.options.mult_tol = num_or(pm, "mult_tol", cfg.pmp.options.mult_tol, "pmp.");
  cfg.pmp.options.drift_tol = num_or(pm, "drift_tol", cfg.pmp.options.drift_tol, "pmp.");
  cfg.pmp.adjoint_tol = num_or(pm, "adjoint_tol", cfg.pmp.adjoint_tol, "pmp.");
  cfg.pmp.epsilon = num_or(pm, "epsilon", 0.0, "pmp.");
  cfg.pmp.delta = num_or(pm, "delta", 0.0, "pmp.");
  if (pm.contains("trajectory")) {
    if (!pm.at("trajectory").is_string()) bad("pmp.trajectory", "expected a path");
    cfg.pmp.trajectory = pm.at("trajectory").get<std::string>();
  }

  cfg.value = parse_value(j.contains("value") ? j.at("value") : json::object(), "value.", n);

  if (j.contains("mfg")) {
    const json& m = j.at("mfg");
    MfgBlock b;
    const json c = m.contains("coupling") ? m.at("coupling") : json::object();
    if (c.contains("type") && c.at("type") != "gaussian") bad("mfg.coupling.type", "only gaussian is supported");
    b.amp_F = num_or(c, "amp_F", b.amp_F, "mfg.coupling.");
    b.width_F = num_or(c, "width_F", b.width_F, "mfg.coupling.");
    b.amp_G = num_or(c, "amp_G", b.amp_G, "mfg.coupling.");
    b.width_G = num_or(c, "width_G", b.width_G, "mfg.coupling.");
    const json& atoms = need(m, "m0", "mfg.");
    if (!atoms.is_array() || atoms.empty()) bad("mfg.m0", "expected a nonempty array of {x, w} atoms");
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const std::string key = "mfg.m0[" + std::to_string(i) + "].";
      const Point x = vector(need(atoms[i], "x", key), key + "x", n);
      if (cfg.domain->b(x) > cfg.domain->tau_bdry()) bad(key + "x", "lies outside the closed set");
      b.m0.points.push_back(x);
      b.m0.weights.push_back(number(need(atoms[i], "w", key), key + "w"));
    }
    try {
      b.m0.validate_probability(1e-12);
    } catch (const Error& e) {
      bad("mfg.m0", e.what());
    }
    b.options.N = int_or(m, "N", b.options.N, "mfg.");
    b.options.alpha = num_or(m, "alpha", b.options.alpha, "mfg.");
    b.options.tol = num_or(m, "tol", b.options.tol, "mfg.");
    b.options.max_iter = int_or(m, "max_iter", b.options.max_iter, "mfg.");
    if (!(b.options.alpha > 0.0 && b.options.alpha <= 1.0)) bad("mfg.alpha", "must lie in (0, 1]");
    if (!(b.options.tol > 0.0)) bad("mfg.tol", "must be > 0");
    if (b.options.max_iter < 1) bad("mfg.max_iter", "must be >= 1");
    if (b.options.N < 8) bad("mfg.N", "needs at least 8 intervals");
    b.value = parse_value(m.contains("value") ? m.at("value") : json::object(), "mfg.value.", n);
    cfg.mfg = std::move(b);
  }

  const json ge = j.contains("geometry") ? j.at("geometry") : json::object();
  cfg.geometry_samples = int_or(ge, "samples", cfg.geometry_samples, "geometry.");
  const json as = j.contains("assumptions") ? j.at("assumptions") : json::object();
  cfg.assumptions.samples = int_or(as, "samples", cfg.assumptions.samples, "assumptions.");
  cfg.assumptions.v_radius = num_or(as, "v_radius", cfg.assumptions.v_radius, "assumptions.");
  cfg.assumptions.p_radius = num_or(as, "p_radius", cfg.assumptions.p_radius, "assumptions.");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) bad("seed", "expected a nonnegative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  cfg.threads = int_or(j, "threads", cfg.threads, "");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return parse_config(j);
}

std::shared_ptr<const Coupling> make_coupling(const MfgBlock& m) {
  return std::make_shared<KernelCoupling>(m.amp_F, m.width_F, m.amp_G, m.width_G);
}

}  // namespace sccv::cli
