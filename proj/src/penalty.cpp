#include "sccv/penalty.hpp"

#include <Eigen/Sparse>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sccv/errors.hpp"

namespace sccv {

void PenaltyParams::validate(const Domain& dom) const {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidProblem, "epsilon must be > 0");
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(ErrorCode::InvalidProblem, "delta must lie in (0, 1]");
  if (rho < 0.0 || rho > dom.rho0()) throw Error(ErrorCode::InvalidProblem, "rho must lie in (0, rho0]");
  if (N < 8) throw Error(ErrorCode::InvalidProblem, "the grid needs N >= 8");
}

double smoothed_positive_part(double b, double s, double* d1, double* d2) {
  if (b <= -s) {
    if (d1) *d1 = 0.0;
    if (d2) *d2 = 0.0;
    return 0.0;
  }
  if (b >= s) {
    if (d1) *d1 = 1.0;
    if (d2) *d2 = 0.0;
    return b;
  }
  const double u = s + b;
  const double s3 = s * s * s;
  if (d1) *d1 = u * u * (2.0 * s - b) / (4.0 * s3);
  if (d2) *d2 = 3.0 * u * (s - b) / (4.0 * s3);
  return u * u * u * (3.0 * s - b) / (16.0 * s3);
}

namespace {

double knot_weight(int k, int N) { return (k == 0 || k == N) ? 0.5 : 1.0; }

}  // namespace

double penalized_cost(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                      const Trajectory& gamma) {
  const int N = gamma.N();
  const double h = gamma.dt();
  const auto& L = *prob.lagrangian;
  double J = 0.0;
  for (int k = 0; k < N; ++k) {
    const Vec v = gamma.interval_velocity(k);
    J += 0.5 * h * (L.value(gamma.time(k), gamma.knots[k], v) + L.value(gamma.time(k + 1), gamma.knots[k + 1], v));
  }
  for (int k = 0; k <= N; ++k) J += knot_weight(k, N) * h / params.epsilon * distance(dom, gamma.knots[k]);
  J += distance(dom, gamma.knots[N]) / params.delta + prob.terminal->value(gamma.knots[N]);
  return J;
}

double penalized_energy(const Problem& prob, const Domain& dom, double epsilon, const Trajectory& gamma) {
  const int N = gamma.N();
  const double h = gamma.dt();
  double e = gamma.kinetic_energy() / (4.0 * prob.mu);
  for (int k = 0; k <= N; ++k) e += knot_weight(k, N) * h / epsilon * distance(dom, gamma.knots[k]);
  return e;
}

SmoothedObjective smoothed_objective(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                                     const Trajectory& gamma, double s, int order) {
  const int N = gamma.N();
  const int n = gamma.dim();
  const double h = gamma.dt();
  const auto& L = *prob.lagrangian;
  SmoothedObjective out;
  if (order >= 1) out.grad = Vec::Zero(N * n);
  if (order >= 2) {
    out.diag.assign(N, Mat::Zero(n, n));
    out.upper.assign(std::max(N - 1, 0), Mat::Zero(n, n));
  }
  LagrangianEval a, b;
  for (int k = 0; k < N; ++k) {
    const Vec v = gamma.interval_velocity(k);
    L.eval(gamma.time(k), gamma.knots[k], v, order, a);
    L.eval(gamma.time(k + 1), gamma.knots[k + 1], v, order, b);
    out.value += 0.5 * h * (a.f + b.f);
    if (order < 1) continue;
    const Vec fv = 0.5 * (a.fv + b.fv);
    // Free index of knot j is j - 1; knot 0 is pinned.
    if (k > 0) out.grad.segment((k - 1) * n, n) += 0.5 * h * a.fx - fv;
    out.grad.segment(k * n, n) += 0.5 * h * b.fx + fv;
    if (order < 2) continue;
    const Mat Vs = (a.fvv + b.fvv) / (2.0 * h);
    if (k > 0) {
      out.diag[k - 1] += 0.5 * h * a.fxx - 0.5 * (a.fvx + a.fvx.transpose()) + Vs;
      out.upper[k - 1] += 0.5 * a.fvx.transpose() - 0.5 * b.fvx - Vs;
    }
    out.diag[k] += 0.5 * h * b.fxx + 0.5 * (b.fvx + b.fvx.transpose()) + Vs;
  }
  for (int k = 0; k <= N; ++k) {
    double c = knot_weight(k, N) * h / params.epsilon;
    if (k == N) c += 1.0 / params.delta;
    const Point& x = gamma.knots[k];
    const double bx = dom.b(x);
    double d1 = 0.0, d2 = 0.0;
    out.value += c * smoothed_positive_part(bx, s, &d1, &d2);
    if (k == 0 || order < 1 || (d1 == 0.0 && d2 == 0.0)) continue;
    const Vec g = dom.grad(x);
    out.grad.segment((k - 1) * n, n) += c * d1 * g;
    if (order >= 2) out.diag[k - 1] += c * (d2 * g * g.transpose() + d1 * dom.hess(x));
  }
  const Point& xN = gamma.knots[N];
  out.value += prob.terminal->value(xN);
  if (order >= 1) out.grad.segment((N - 1) * n, n) += prob.terminal->grad(xN);
  if (order >= 2) out.diag[N - 1] += prob.terminal->hess(xN);
  return out;
}

bool block_tridiagonal_solve(const std::vector<Mat>& diag, const std::vector<Mat>& upper, double shift,
                             const Vec& rhs, Vec& out) {
  const int N = static_cast<int>(diag.size());
  if (N == 0) return false;
  const int n = static_cast<int>(diag[0].rows());
  std::vector<Eigen::LLT<Mat>> chol(N);
  std::vector<Mat> sub(N);  // sub[k] = L(k, k-1)
  for (int k = 0; k < N; ++k) {
    Mat D = diag[k];
    D.diagonal().array() += shift;
    if (k > 0) {
      sub[k] = chol[k - 1].matrixL().solve(upper[k - 1]).transpose();
      D.noalias() -= sub[k] * sub[k].transpose();
    }
    chol[k].compute(D);
    if (chol[k].info() != Eigen::Success) return false;
    const auto diagL = Mat(chol[k].matrixL()).diagonal();
    if (!(diagL.minCoeff() > 0.0) || !diagL.allFinite()) return false;
  }
  std::vector<Vec> y(N);
  for (int k = 0; k < N; ++k) {
    Vec r = rhs.segment(k * n, n);
    if (k > 0) r.noalias() -= sub[k] * y[k - 1];
    y[k] = chol[k].matrixL().solve(r);
  }
  out.resize(N * n);
  Vec next;
  for (int k = N - 1; k >= 0; --k) {
    Vec r = y[k];
    if (k < N - 1) r.noalias() -= sub[k + 1].transpose() * next;
    next = chol[k].matrixU().solve(r);
    out.segment(k * n, n) = next;
  }
  return out.allFinite();
}

namespace {

void apply_step(Trajectory& g, const Vec& dir, double a) {
  const int n = g.dim();
  for (int k = 1; k <= g.N(); ++k) g.knots[k] += a * dir.segment((k - 1) * n, n);
}

// Min-norm element of the limiting subdifferential of the exact penalized cost
// with respect to the free knots. Knots within `contact` of the boundary get the
// segment [0, 1] Db of the distance subdifferential.
double stationarity_measure(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                            const Trajectory& gamma, double contact) {
  const int N = gamma.N();
  const int n = gamma.dim();
  const double h = gamma.dt();
  // Smooth part only: evaluate with a penalty that is switched off.
  PenaltyParams none = params;
  none.epsilon = std::numeric_limits<double>::infinity();
  none.delta = std::numeric_limits<double>::infinity();
  Vec g = smoothed_objective(prob, dom, none, gamma, 1.0, 1).grad;
  double total = 0.0;
  for (int k = 1; k <= N; ++k) {
    double c = knot_weight(k, N) * h / params.epsilon;
    if (k == N) c += 1.0 / params.delta;
    Vec gk = g.segment((k - 1) * n, n);
    const double bx = dom.b(gamma.knots[k]);
    if (bx > contact) {
      gk += c * dom.grad(gamma.knots[k]);
    } else if (bx >= -contact) {
      const Vec nb = dom.grad(gamma.knots[k]);
      const double theta = std::clamp(-gk.dot(nb) / c, 0.0, 1.0);
      gk += c * theta * nb;
    }
    total += gk.squaredNorm();
  }
  return std::sqrt(total);
}

// Fixes the knots in the smoothing band on the boundary and solves the
// equality-constrained KKT system by Newton. The result is the exact minimizer
// of the nonsmooth penalized cost when every multiplier lies in [0, c_k] and
// the other knots stay inside; otherwise the input is kept.
bool polish_active_set(const Problem& prob, const Domain& dom, const PenaltyParams& params, double s,
                       Trajectory& gamma, int* active_count) {
  const int N = gamma.N();
  const int n = gamma.dim();
  const double h = gamma.dt();
  PenaltyParams none = params;
  none.epsilon = std::numeric_limits<double>::infinity();
  none.delta = std::numeric_limits<double>::infinity();

  std::vector<int> active;
  std::vector<double> weight, mult;
  for (int k = 1; k <= N; ++k) {
    const double bx = dom.b(gamma.knots[k]);
    if (bx <= -s) continue;
    double c = knot_weight(k, N) * h / params.epsilon;
    if (k == N) c += 1.0 / params.delta;
    double d1 = 0.0;
    smoothed_positive_part(bx, s, &d1);
    active.push_back(k);
    weight.push_back(c);
    mult.push_back(c * d1);
  }
  if (active_count) *active_count = static_cast<int>(active.size());
  if (active.empty()) return false;
  const int na = static_cast<int>(active.size());
  const int m = N * n + na;

  Trajectory g = gamma;
  Eigen::VectorXd mu = Eigen::Map<Eigen::VectorXd>(mult.data(), na);
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 20; ++it) {
    const auto obj = smoothed_objective(prob, dom, none, g, s, 2);
    Eigen::VectorXd res(m);
    res.head(N * n) = obj.grad;
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < N; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          trip.emplace_back(k * n + i, k * n + j, obj.diag[k](i, j));
          if (k + 1 < N) {
            trip.emplace_back(k * n + i, (k + 1) * n + j, obj.upper[k](i, j));
            trip.emplace_back((k + 1) * n + j, k * n + i, obj.upper[k](i, j));
          }
        }
    for (int a = 0; a < na; ++a) {
      const Point& x = g.knots[active[a]];
      const int row = (active[a] - 1) * n;
      const Vec nb = dom.grad(x);
      const Mat hb = dom.hess(x);
      res.segment(row, n) += mu[a] * nb;
      res[N * n + a] = dom.b(x);
      for (int i = 0; i < n; ++i) {
        trip.emplace_back(N * n + a, row + i, nb[i]);
        trip.emplace_back(row + i, N * n + a, nb[i]);
        for (int j = 0; j < n; ++j) trip.emplace_back(row + i, row + j, mu[a] * hb(i, j));
      }
    }
    const double rn = res.norm();
    if (!std::isfinite(rn)) return false;
    if (rn >= best && it > 2) break;
    best = std::min(best, rn);
    Eigen::SparseMatrix<double> K(m, m);
    K.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(K);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd step = lu.solve(-res);
    if (lu.info() != Eigen::Success || !step.allFinite()) return false;
    apply_step(g, step.head(N * n), 1.0);
    mu += step.tail(na);
    if (step.head(N * n).lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + dom.diameter())) break;
  }

  const double tol = 1e-8 * (1.0 + mu.cwiseAbs().maxCoeff());
  for (int a = 0; a < na; ++a)
    if (mu[a] < -tol || mu[a] > weight[a] + tol) return false;
  std::vector<bool> is_active(N + 1, false);
  for (int k : active) is_active[k] = true;
  for (int k = 1; k <= N; ++k) {
    const double bx = dom.b(g.knots[k]);
    if (is_active[k] ? std::abs(bx) > dom.tau_bdry() : bx > 0.0) return false;
  }
  const double before = penalized_cost(prob, dom, params, gamma);
  const double after = penalized_cost(prob, dom, params, g);
  if (!(after <= before + 1e-12 * (1.0 + std::abs(before)))) return false;
  // Land exactly on the boundary; the residual offset is at roundoff level.
  for (int k : active) g.knots[k] = dom.nearest_boundary_point(g.knots[k]);
  gamma = std::move(g);
  return true;
}

Trajectory initial_arc(const Point& x0, const Trajectory* init, int N, double t0, double T) {
  if (!init || init->knots.empty()) return Trajectory::constant(t0, T, N, x0);
  Trajectory g;
  g.t0 = t0;
  g.t1 = T;
  g.knots.resize(N + 1);
  for (int k = 0; k <= N; ++k) {
    const double t = t0 + (T - t0) * k / N;
    // Warm starts may cover a different horizon; map times proportionally.
    const double tau = init->t0 + (t - t0) / (T - t0) * (init->t1 - init->t0);
    g.knots[k] = init->at(tau);
  }
  g.knots[0] = x0;
  return g;
}

}  // namespace

Trajectory minimize_penalized(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                              const Point& x0, const Trajectory* init, const SolverOptions& opt,
                              SolveReport* report, double t0) {
  prob.validate();
  params.validate(dom);
  if (x0.size() != prob.dim() || !x0.allFinite())
    throw Error(ErrorCode::InvalidProblem, "initial point has the wrong dimension");
  if (dom.b(x0) > dom.tau_bdry()) throw Error(ErrorCode::InvalidProblem, "initial point lies outside the closed set");
  if (!(t0 < prob.horizon)) throw Error(ErrorCode::InvalidProblem, "start time must precede the horizon");

  const int N = params.N;
  Trajectory gamma = initial_arc(x0, init, N, t0, prob.horizon);
  const double diam = dom.diameter();
  SolveReport rep;

  std::vector<double> levels;
  for (double s = opt.smoothing_start * diam; s > opt.smoothing_end * diam * (1.0 + 1e-9);
       s /= opt.smoothing_factor)
    levels.push_back(s);
  levels.push_back(opt.smoothing_end * diam);

  double lm = 0.0;
  bool last_level_ok = false;
  SmoothedObjective obj;
  for (double s : levels) {
    last_level_ok = false;
    int flat_steps = 0;
    for (;;) {
      obj = smoothed_objective(prob, dom, params, gamma, s, 2);
      if (!std::isfinite(obj.value) || !obj.grad.allFinite())
        throw Error(ErrorCode::NonFiniteCost, "penalized objective is not finite");
      const double gnorm = obj.grad.norm();
      if (gnorm <= opt.tol_grad * (1.0 + std::abs(obj.value))) {
        last_level_ok = true;
        break;
      }
      if (rep.iterations >= opt.max_iterations)
        throw Error(ErrorCode::MaxIterations,
                    "Newton budget of " + std::to_string(opt.max_iterations) + " steps exhausted");
      double scale = 0.0;
      for (const auto& D : obj.diag) scale = std::max(scale, D.cwiseAbs().maxCoeff());
      scale = std::max(scale, 1.0);

      bool accepted = false;
      bool roundoff_floor = false;
      Vec dir;
      for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
        if (!block_tridiagonal_solve(obj.diag, obj.upper, lm, -obj.grad, dir)) {
          lm = std::max(10.0 * lm, 1e-10 * scale);
          continue;
        }
        const double slope = obj.grad.dot(dir);
        if (!(slope < 0.0)) {
          lm = std::max(10.0 * lm, 1e-10 * scale);
          continue;
        }
        // Newton decrement below the resolution of the objective: nothing left to gain.
        if (-slope <= 1e-15 * (1.0 + std::abs(obj.value))) {
          roundoff_floor = true;
          break;
        }
        double a = 1.0;
        for (int ls = 0; ls < 40; ++ls) {
          Trajectory trial = gamma;
          apply_step(trial, dir, a);
          const double val = smoothed_objective(prob, dom, params, trial, s, 0).value;
          if (std::isfinite(val) && val <= obj.value + 1e-4 * a * slope) {
            gamma = std::move(trial);
            accepted = true;
            rep.history.push_back(val);
            break;
          }
          a *= 0.5;
        }
        if (!accepted) lm = std::max(10.0 * lm, 1e-10 * scale);
      }
      if (roundoff_floor) {
        last_level_ok = true;
        break;
      }
      if (!accepted) {
        spdlog::debug("penalty: line search stalled at s={:.3e}, |grad|={:.3e}", s, gnorm);
        break;
      }
      ++rep.iterations;
      // Accepted steps that no longer move the objective mean the gradient
      // sits on its roundoff floor.
      if (obj.value - rep.history.back() <= 1e-15 * (1.0 + std::abs(obj.value))) {
        if (++flat_steps >= 5) {
          last_level_ok = true;
          break;
        }
      } else {
        flat_steps = 0;
      }
      lm *= 0.1;
      if (lm < 1e-14 * scale) lm = 0.0;
    }
    rep.final_smoothing = s;
  }

  rep.smoothed_cost = obj.value;
  rep.grad_norm = obj.grad.norm();
  rep.converged = last_level_ok;
  if (opt.polish && last_level_ok)
    rep.polished = polish_active_set(prob, dom, params, rep.final_smoothing, gamma, &rep.active_knots);
  rep.cost = penalized_cost(prob, dom, params, gamma);
  if (!std::isfinite(rep.cost)) throw Error(ErrorCode::NonFiniteCost, "penalized cost is not finite");
  rep.stationarity =
      stationarity_measure(prob, dom, params, gamma, std::max(rep.final_smoothing, dom.tau_bdry()));
  spdlog::debug("penalty: eps={:.3e} N={} iterations={} cost={:.12g} grad={:.2e} converged={}", params.epsilon,
                N, rep.iterations, rep.cost, rep.grad_norm, rep.converged);
  if (report) *report = std::move(rep);
  return gamma;
}

DeltaChoice delta_choice(const Problem& prob, const Domain& dom, int per_axis) {
  const Hamiltonian ham(prob);
  DeltaChoice out;
  for (const auto& x : region_grid(dom, per_axis, dom.rho0())) {
    const auto d = ham.derivs(prob.horizon, x, prob.terminal->grad(x), false);
    out.N_sup = std::max(out.N_sup, d.DpH.norm());
  }
  out.delta = out.N_sup > 0.0 ? std::min(1.0 / (2.0 * prob.mu * out.N_sup), 1.0) : 1.0;
  return out;
}

double max_distance(const Domain& dom, const Trajectory& gamma) {
  double m = 0.0;
  for (const auto& x : gamma.knots) m = std::max(m, distance(dom, x));
  return m;
}

double holder_half_ratio(const Trajectory& gamma) {
  const int N = gamma.N();
  const double h = gamma.dt();
  double best = 0.0;
  for (int i = 0; i <= N; ++i)
    for (int j = i + 1; j <= N; ++j)
      best = std::max(best, (gamma.knots[j] - gamma.knots[i]).norm() / std::sqrt((j - i) * h));
  return best;
}

ScheduleResult epsilon_schedule(const Problem& prob, const Domain& dom, const Point& x0, double delta, int N,
                                const SolverOptions& opt, const Trajectory* init, double t0) {
  ScheduleResult res;
  PenaltyParams params;
  params.delta = delta;
  params.N = N;
  params.epsilon = opt.epsilon_start;
  const double tol = opt.feasibility_tol * dom.diameter();
  Trajectory warm;
  const Trajectory* start = init;
  for (int halving = 0; halving <= opt.max_halvings; ++halving) {
    SolveReport rep;
    Trajectory g = minimize_penalized(prob, dom, params, x0, start, opt, &rep, t0);
    const double md = max_distance(dom, g);
    res.epsilons.push_back(params.epsilon);
    res.max_distances.push_back(md);
    res.holder_ratios.push_back(holder_half_ratio(g));
    spdlog::debug("schedule: eps={:.3e} max d={:.3e}", params.epsilon, md);
    if (md <= tol) {
      res.gamma = std::move(g);
      res.params = params;
      res.report = std::move(rep);
      res.max_distance = md;
      return res;
    }
    warm = std::move(g);
    start = &warm;
    params.epsilon *= 0.5;
  }
  throw Error(ErrorCode::ScheduleExhausted,
              "no feasible minimizer after " + std::to_string(opt.max_halvings) + " halvings of epsilon");
}

}  // namespace sccv
