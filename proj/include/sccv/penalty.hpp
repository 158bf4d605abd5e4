#pragma once

#include <optional>
#include <vector>

#include "sccv/geometry.hpp"
#include "sccv/model.hpp"
#include "sccv/trajectory.hpp"

namespace sccv {

struct PenaltyParams {
  double epsilon = 1.0;
  double delta = 1.0;
  double rho = 0.0;  // 0 selects rho0
  int N = 256;

  void validate(const Domain& dom) const;
};

struct SolverOptions {
  double tol_grad = 1e-8;           // relative to 1 + |cost|
  int max_iterations = 100000;      // Newton steps per minimize call
  double smoothing_start = 1e-2;    // times diam
  double smoothing_end = 1e-9;      // times diam
  double smoothing_factor = 10.0;
  double feasibility_tol = 1e-6;    // times diam
  int max_halvings = 40;
  double epsilon_start = 1.0;
  bool polish = true;               // exact active-set Newton after the last smoothing level
};

struct SolveReport {
  double cost = 0.0;            // exact penalized cost
  double smoothed_cost = 0.0;   // objective at the final smoothing level
  double grad_norm = 0.0;       // smoothed objective gradient
  double stationarity = 0.0;    // min-norm element of the limiting subdifferential
  int iterations = 0;
  bool converged = false;
  double final_smoothing = 0.0;
  bool polished = false;
  int active_knots = 0;
  std::vector<double> history;  // smoothed objective after every accepted step
};

// C^2 convex majorant of max(b, 0): zero below -s, b above s and
// (s + b)^3 (3s - b) / (16 s^3) between, with slope 1/2 at b = 0.
double smoothed_positive_part(double b, double s, double* d1 = nullptr, double* d2 = nullptr);

// Trapezoid transcription of the running cost plus the penalties and the
// terminal cost on [gamma.t0, gamma.t1].
double penalized_cost(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                      const Trajectory& gamma);

// Integral of (1/4mu)|gamma'|^2 + (1/eps) d(gamma), the left side of the
// penalized energy estimate.
double penalized_energy(const Problem& prob, const Domain& dom, double epsilon, const Trajectory& gamma);

// Smoothed objective over the free knots x_1..x_N. order 0 fills the value,
// 1 adds the gradient, 2 adds the block-tridiagonal Hessian.
struct SmoothedObjective {
  double value = 0.0;
  Vec grad;                   // N n
  std::vector<Mat> diag;      // N blocks
  std::vector<Mat> upper;     // N - 1 blocks, (k, k + 1)
};
SmoothedObjective smoothed_objective(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                                     const Trajectory& gamma, double s, int order);

// Solves (H + shift I) x = rhs for a symmetric block-tridiagonal H. Returns
// false if the matrix is not positive definite.
bool block_tridiagonal_solve(const std::vector<Mat>& diag, const std::vector<Mat>& upper, double shift,
                             const Vec& rhs, Vec& out);

// Minimizes the penalized cost on [t0, prob.horizon] from x0. The default start
// is the constant arc at x0.
Trajectory minimize_penalized(const Problem& prob, const Domain& dom, const PenaltyParams& params,
                              const Point& x0, const Trajectory* init = nullptr,
                              const SolverOptions& opt = {}, SolveReport* report = nullptr, double t0 = 0.0);

struct DeltaChoice {
  double delta = 1.0;
  double N_sup = 0.0;  // sup of |D_pH(T, x, Dg(x))| on the grid
};
// delta = min(1 / (2 mu N), 1), N sampled on a tensor grid of {b <= rho0}.
DeltaChoice delta_choice(const Problem& prob, const Domain& dom, int per_axis = 41);

struct ScheduleResult {
  Trajectory gamma;
  PenaltyParams params;
  SolveReport report;
  std::vector<double> epsilons;       // every epsilon tried
  std::vector<double> max_distances;  // max_t d(gamma(t)) for each
  std::vector<double> holder_ratios;  // sup |gamma(t)-gamma(s)| / sqrt(|t-s|) for each
  double max_distance = 0.0;
};

// Halves epsilon from opt.epsilon_start, warm-starting each solve, until the
// minimizer stays within feasibility_tol * diam of the closed set.
ScheduleResult epsilon_schedule(const Problem& prob, const Domain& dom, const Point& x0, double delta,
                                int N, const SolverOptions& opt = {}, const Trajectory* init = nullptr,
                                double t0 = 0.0);

double max_distance(const Domain& dom, const Trajectory& gamma);
// sup over knot pairs of |gamma(t) - gamma(s)| / |t - s|^{1/2}.
double holder_half_ratio(const Trajectory& gamma);

}  // namespace sccv
