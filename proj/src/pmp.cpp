#include "sccv/pmp.hpp"

#include <algorithm>
#include <cmath>

#include "sccv/errors.hpp"

namespace sccv {

std::vector<Vec> recover_adjoint(const Problem& prob, const Trajectory& gamma) {
  const int N = gamma.N();
  std::vector<Vec> p(N + 1);
  for (int k = 0; k <= N; ++k) p[k] = -prob.lagrangian->dv(gamma.time(k), gamma.knots[k], gamma.knot_velocity(k));
  return p;
}

double duality_residual(const Problem& prob, const Trajectory& gamma, const std::vector<Vec>& p) {
  const Hamiltonian ham(prob);
  double worst = 0.0;
  for (int k = 0; k <= gamma.N(); ++k) {
    const auto lr = ham.legendre(gamma.time(k), gamma.knots[k], p[k]);
    // D_pH = -v*, so the residual is |v - v*|.
    worst = std::max(worst, (gamma.knot_velocity(k) - lr.vstar).norm());
  }
  return worst;
}

std::vector<Vec> adjoint_derivative(const Trajectory& gamma, const std::vector<Vec>& p) {
  const int N = gamma.N();
  const double h = gamma.dt();
  std::vector<Vec> d(N + 1);
  d[0] = (-3.0 * p[0] + 4.0 * p[1] - p[2]) / (2.0 * h);
  d[N] = (3.0 * p[N] - 4.0 * p[N - 1] + p[N - 2]) / (2.0 * h);
  for (int k = 1; k < N; ++k) d[k] = (p[k + 1] - p[k - 1]) / (2.0 * h);
  return d;
}

Vec terminal_momentum(const Problem& prob, const Trajectory& gamma) {
  const int N = gamma.N();
  const double h = gamma.dt();
  const Vec v = gamma.interval_velocity(N - 1);
  LagrangianEval a, b;
  prob.lagrangian->eval(gamma.time(N - 1), gamma.knots[N - 1], v, 1, a);
  prob.lagrangian->eval(gamma.time(N), gamma.knots[N], v, 1, b);
  return -0.5 * (a.fv + b.fv) - 0.5 * h * b.fx;
}

std::vector<bool> contact_set(const Domain& dom, const Trajectory& gamma, double tol) {
  std::vector<bool> c(gamma.knots.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = dom.b(gamma.knots[k]) >= -tol;
  return c;
}

std::vector<bool> junction_mask(const std::vector<bool>& contact, int window) {
  const int n = static_cast<int>(contact.size());
  std::vector<bool> mask(n, false);
  for (int k = 0; k + 1 < n; ++k) {
    if (contact[k] == contact[k + 1]) continue;
    for (int j = std::max(0, k - window + 1); j <= std::min(n - 1, k + window); ++j) mask[j] = true;
  }
  return mask;
}

MultiplierResult multiplier_from_residual(const Problem& prob, const Domain& dom, const Trajectory& gamma,
                                          const std::vector<Vec>& p, const PmpOptions& opt) {
  const int N = gamma.N();
  const Hamiltonian ham(prob);
  MultiplierResult out;
  out.contact = contact_set(dom, gamma, opt.contact_tol * dom.diameter());
  const auto junction = junction_mask(out.contact, opt.junction_window);
  const auto pdot = adjoint_derivative(gamma, p);
  out.lam.assign(N + 1, 0.0);
  out.orth_residual.assign(N + 1, 0.0);
  bool any = false;
  for (int k = 0; k <= N; ++k) {
    if (!out.contact[k]) continue;
    const Point& x = gamma.knots[k];
    const auto d = ham.derivs(gamma.time(k), x, p[k], false);
    const Vec nb = dom.grad(x);
    const Vec force = d.DxH - pdot[k];
    out.lam[k] = force.dot(nb);
    out.orth_residual[k] = (force - out.lam[k] * nb).norm();
    out.max_lam = std::max(out.max_lam, out.lam[k]);
    if (!junction[k]) {
      out.min_lam = any ? std::min(out.min_lam, out.lam[k]) : out.lam[k];
      any = true;
    }
  }
  if (any && out.min_lam < -opt.mult_tol * std::max(out.max_lam, 0.0))
    throw Error(ErrorCode::NegativeMultiplier,
                "constraint multiplier " + std::to_string(out.min_lam) + " is negative on a contact arc");
  if (out.contact[N]) {
    const Point& xT = gamma.knots[N];
    out.nu = (terminal_momentum(prob, gamma) - prob.terminal->grad(xT)).dot(dom.grad(xT));
  }
  return out;
}

double feedback_lambda(const Hamiltonian& ham, const Domain& dom, double t, const Point& x, const Vec& p) {
  const double bx = dom.b(x);
  if (!(std::abs(bx) < dom.rho0()))
    throw Error(ErrorCode::OutsideTube, "feedback multiplier needs |b| < rho0");
  const auto d = ham.derivs(t, x, p, true);
  const Vec nb = dom.grad(x);
  const Mat D2b = dom.hess(x);
  const double theta = nb.dot(d.DppH * nb);
  const double num = -d.DpH.dot(D2b * d.DpH) + nb.dot(d.DptH) - nb.dot(d.DpxH * d.DpH) + nb.dot(d.DppH * d.DxH);
  return num / theta;
}

std::vector<double> hamiltonian_drift(const Problem& prob, const Domain& dom, const Trajectory& gamma,
                                      double epsilon) {
  const int N = gamma.N();
  std::vector<double> r(N);
  LagrangianEval e;
  for (int k = 0; k < N; ++k) {
    const double t = gamma.t0 + (k + 0.5) * gamma.dt();
    const Point xm = 0.5 * (gamma.knots[k] + gamma.knots[k + 1]);
    const Vec v = gamma.interval_velocity(k);
    prob.lagrangian->eval(t, xm, v, 1, e);
    // With p = -D_v f(v), v is the maximizer in H, so H = <D_v f, v> - f.
    r[k] = e.fv.dot(v) - e.f - distance(dom, xm) / epsilon;
  }
  return r;
}

Extremal build_extremal(const Problem& prob, const Domain& dom, const Trajectory& gamma, const PenaltyParams& params,
                        const PmpOptions& opt) {
  gamma.validate();
  Extremal ex;
  ex.gamma = gamma;
  ex.epsilon = params.epsilon;
  ex.delta = params.delta;
  ex.p = recover_adjoint(prob, gamma);
  const auto mr = multiplier_from_residual(prob, dom, gamma, ex.p, opt);
  ex.lam = mr.lam;
  ex.nu = mr.nu;
  ex.pT = terminal_momentum(prob, gamma);
  ex.r = hamiltonian_drift(prob, dom, gamma, params.epsilon);
  const auto rep = check_assumptions(prob, dom);
  ex.K = energy_bound(prob, rep);
  ex.C1 = c1_constant(prob, rep, ex.K);
  ex.Lstar = lstar_bound(prob, rep, ex.K, params.delta);
  ex.N_sup = delta_choice(prob, dom).N_sup;
  return ex;
}

bool PmpReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

const PmpCheck* PmpReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

PmpReport check_extremal(const Problem& prob, const Domain& dom, const Extremal& ex, const PmpOptions& opt,
                         double adjoint_tol) {
  if (!(adjoint_tol > 0.0)) adjoint_tol = 1e-3;
  const Trajectory& g = ex.gamma;
  const int N = g.N();
  const Hamiltonian ham(prob);
  PmpReport rep;
  auto add = [&](const char* name, double value, double bound, bool pass) {
    rep.checks.push_back({name, value, bound, pass});
  };

  rep.state_residual = duality_residual(prob, g, ex.p);
  add("state_ode", rep.state_residual, adjoint_tol, rep.state_residual < adjoint_tol);

  const auto contact = contact_set(dom, g, opt.contact_tol * dom.diameter());
  const auto junction = junction_mask(contact, opt.junction_window);
  const auto pdot = adjoint_derivative(g, ex.p);
  bool any_contact = false;
  for (int k = 0; k <= N; ++k) {
    if (junction[k]) continue;
    const auto d = ham.derivs(g.time(k), g.knots[k], ex.p[k], false);
    Vec res = pdot[k] - d.DxH;
    if (contact[k]) {
      const double L = feedback_lambda(ham, dom, g.time(k), g.knots[k], ex.p[k]);
      res += L * dom.grad(g.knots[k]);
      const double scale = std::max(std::abs(L), 1e-12);
      rep.lambda_agreement = std::max(rep.lambda_agreement, std::abs(L - ex.lam[k]) / scale);
      rep.min_lam = any_contact ? std::min(rep.min_lam, ex.lam[k]) : ex.lam[k];
      any_contact = true;
      ++rep.contact_knots;
    }
    rep.adjoint_residual = std::max(rep.adjoint_residual, res.norm());
  }
  for (double l : ex.lam) rep.max_lam = std::max(rep.max_lam, l);
  add("adjoint_ode", rep.adjoint_residual, adjoint_tol, rep.adjoint_residual < adjoint_tol);

  const Point& xT = g.knots[N];
  Vec trans = ex.pT - prob.terminal->grad(xT);
  if (contact[N]) trans -= ex.nu * dom.grad(xT);
  rep.transversality = trans.norm();
  add("transversality", rep.transversality, 1e-6, rep.transversality < 1e-6);

  const double mult_floor = -opt.mult_tol * rep.max_lam;
  add("multiplier_sign", rep.min_lam, mult_floor, !any_contact || rep.min_lam >= mult_floor);
  add("feedback_agreement", rep.lambda_agreement, 1e-3, rep.lambda_agreement <= 1e-3);

  double rmin = ex.r.front(), rmax = ex.r.front();
  for (std::size_t k = 1; k < ex.r.size(); ++k) {
    rmin = std::min(rmin, ex.r[k]);
    rmax = std::max(rmax, ex.r[k]);
    rep.drift_integral += std::abs(ex.r[k] - ex.r[k - 1]);
  }
  rep.r_variation = rmax - rmin;
  const double drift_bound =
      prob.kappa * (prob.horizon + 4.0 * prob.mu * ex.K) + opt.drift_tol * (1.0 + std::abs(ex.r.front()));
  add("hamiltonian_drift", rep.drift_integral, drift_bound, rep.drift_integral <= drift_bound);

  rep.max_speed = g.max_speed();
  add("speed_bound", rep.max_speed, ex.Lstar, rep.max_speed <= ex.Lstar);

  const double nu_bound = std::max(1.0, 2.0 * prob.mu * ex.N_sup);
  add("nu_bound", ex.nu, nu_bound, ex.nu >= -opt.mult_tol * nu_bound && ex.nu <= nu_bound);

  for (int k = 0; k <= N; ++k) {
    const double cap = 4.0 * prob.mu * (distance(dom, g.knots[k]) / ex.epsilon + ex.C1 / (ex.delta * ex.delta));
    rep.p_bound_ratio = std::max(rep.p_bound_ratio, ex.p[k].squaredNorm() / cap);
  }
  add("adjoint_bound", rep.p_bound_ratio, 1.0, rep.p_bound_ratio <= 1.0);

  const double h = g.dt();
  for (int k = 1; k < N; ++k)
    rep.max_second_difference = std::max(
        rep.max_second_difference, (g.knots[k + 1] - 2.0 * g.knots[k] + g.knots[k - 1]).norm() / (h * h));
  return rep;
}

ShootResult shoot(const Hamiltonian& ham, const Domain& dom, const Point& x0, const Vec& p0, bool feedback_on,
                  int N, double t0, double contact_tol) {
  if (dom.b(x0) > dom.tau_bdry()) throw Error(ErrorCode::InvalidProblem, "shooting must start in the closed set");
  if (contact_tol < 0.0) contact_tol = dom.tau_bdry();
  const double T = ham.problem().horizon;
  const double h = (T - t0) / N;
  const double rho0 = dom.rho0();

  // The switch is decided once per step so all RK4 stages see the same smooth
  // vector field; stage points sit O(h^2) off the boundary.
  auto is_active = [&](double t, const Vec& x, const Vec& p) {
    const double bx = dom.b(x);
    if (bx >= rho0) throw Error(ErrorCode::LeftTube, "shooting arc left the tube around the closed set");
    if (!feedback_on || bx < -contact_tol) return false;
    const auto d = ham.derivs(t, x, p, false);
    // Roundoff-level inward speeds count as tangential.
    return dom.grad(x).dot(-d.DpH) >= -1e-10 * (1.0 + d.DpH.norm());
  };
  auto rhs = [&](double t, const Vec& x, const Vec& p, bool active, Vec& dx, Vec& dp) {
    const auto d = ham.derivs(t, x, p, false);
    dx = -d.DpH;
    dp = d.DxH;
    if (active) dp -= feedback_lambda(ham, dom, t, x, p) * dom.grad(x);
  };

  ShootResult out;
  out.gamma = Trajectory::constant(t0, T, N, x0);
  out.p.assign(N + 1, p0);
  Vec x = x0, p = p0;
  Vec k1x, k1p, k2x, k2p, k3x, k3p, k4x, k4p;
  for (int k = 0; k < N; ++k) {
    const double t = t0 + k * h;
    const bool active = is_active(t, x, p);
    if (active) ++out.feedback_steps;
    rhs(t, x, p, active, k1x, k1p);
    rhs(t + 0.5 * h, x + 0.5 * h * k1x, p + 0.5 * h * k1p, active, k2x, k2p);
    rhs(t + 0.5 * h, x + 0.5 * h * k2x, p + 0.5 * h * k2p, active, k3x, k3p);
    rhs(t + h, x + h * k3x, p + h * k3p, active, k4x, k4p);
    x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    if (!x.allFinite() || dom.b(x) >= rho0)
      throw Error(ErrorCode::LeftTube, "shooting arc left the tube around the closed set");
    out.gamma.knots[k + 1] = x;
    out.p[k + 1] = p;
  }
  return out;
}

}  // namespace sccv
