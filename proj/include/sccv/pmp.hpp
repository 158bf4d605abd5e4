#pragma once

#include <string>
#include <vector>

#include "sccv/geometry.hpp"
#include "sccv/model.hpp"
#include "sccv/penalty.hpp"
#include "sccv/trajectory.hpp"

namespace sccv {

// Certified minimizer together with its adjoint data.
struct Extremal {
  Trajectory gamma;
  std::vector<Vec> p;        // adjoint at each knot
  std::vector<double> lam;   // constraint multiplier over epsilon, per knot
  double nu = 0.0;           // terminal multiplier beta / delta
  std::vector<double> r;     // Hamiltonian drift at interval midpoints
  Vec pT;                    // discrete terminal momentum
  double epsilon = 1.0;
  double delta = 1.0;
  double Lstar = 0.0;
  double K = 0.0;            // energy bound
  double C1 = 0.0;
  double N_sup = 0.0;        // sup |D_pH(T, x, Dg(x))|
};

struct PmpOptions {
  double contact_tol = 1e-8;   // times diam; knots with b >= -tol count as contact
  int junction_window = 3;     // knots excluded on each side of a contact switch
  double mult_tol = 1e-4;      // relative to max lam
  double drift_tol = 1e-6;     // relative to 1 + |r(0)|
};

// p_k = -D_v f(t_k, x_k, v_k) with the knot velocities of the trajectory.
std::vector<Vec> recover_adjoint(const Problem& prob, const Trajectory& gamma);

// max_k |v_k + D_pH(t_k, x_k, p_k)|
double duality_residual(const Problem& prob, const Trajectory& gamma, const std::vector<Vec>& p);

// Adjoint derivative by centered differences, one-sided second order at the ends.
std::vector<Vec> adjoint_derivative(const Trajectory& gamma, const std::vector<Vec>& p);

// Momentum at t = T of the trapezoid transcription, -D_{x_N} of the last
// interval's contribution. The discrete optimality condition makes
// pT = Dg + nu Db exact up to solver tolerance.
Vec terminal_momentum(const Problem& prob, const Trajectory& gamma);

std::vector<bool> contact_set(const Domain& dom, const Trajectory& gamma, double tol);
// Knots whose centered stencil may straddle a switch of the contact set.
std::vector<bool> junction_mask(const std::vector<bool>& contact, int window);

struct MultiplierResult {
  std::vector<double> lam;
  double nu = 0.0;
  std::vector<bool> contact;
  std::vector<double> orth_residual;  // |(D_xH - p') - lam Db| on contact knots
  double max_lam = 0.0;
  double min_lam = 0.0;               // over contact knots outside junctions
};

// Throws NegativeMultiplier when some contact knot away from a junction has
// lam < -mult_tol * max lam.
MultiplierResult multiplier_from_residual(const Problem& prob, const Domain& dom, const Trajectory& gamma,
                                          const std::vector<Vec>& p, const PmpOptions& opt = {});

// Multiplier that keeps b(gamma) at second order along the flow. Throws
// OutsideTube unless |b(x)| < rho0.
double feedback_lambda(const Hamiltonian& ham, const Domain& dom, double t, const Point& x, const Vec& p);

// r = H - (1/eps) d at interval midpoints, using the interval velocity.
std::vector<double> hamiltonian_drift(const Problem& prob, const Domain& dom, const Trajectory& gamma,
                                      double epsilon);

// Assembles an Extremal from a minimizer produced with the given parameters.
Extremal build_extremal(const Problem& prob, const Domain& dom, const Trajectory& gamma,
                        const PenaltyParams& params, const PmpOptions& opt = {});

struct PmpCheck {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct PmpReport {
  std::vector<PmpCheck> checks;
  double state_residual = 0.0;
  double adjoint_residual = 0.0;
  double transversality = 0.0;
  double lambda_agreement = 0.0;  // max relative gap between feedback and residual multipliers
  double min_lam = 0.0;
  double max_lam = 0.0;
  double r_variation = 0.0;
  double drift_integral = 0.0;
  double max_speed = 0.0;
  double max_second_difference = 0.0;
  double p_bound_ratio = 0.0;     // max |p|^2 / (4 mu [(1/eps) d + C1/delta^2])
  int contact_knots = 0;

  bool passed() const;
  const PmpCheck* find(const std::string& name) const;
};

// adjoint_tol defaults to 1e-3 when not positive.
PmpReport check_extremal(const Problem& prob, const Domain& dom, const Extremal& ex, const PmpOptions& opt = {},
                         double adjoint_tol = 0.0);

struct ShootResult {
  Trajectory gamma;
  std::vector<Vec> p;
  int feedback_steps = 0;  // RK4 steps that started with the feedback active
};

// RK4 on x' = -D_pH, p' = D_xH - Lambda Db 1{active} over [t0, T] with N steps.
// The feedback is active on a step when, at its start, b >= -contact_tol and
// the velocity points outward. contact_tol < 0 selects tau_bdry. Throws
// LeftTube past the rho0 tube.
ShootResult shoot(const Hamiltonian& ham, const Domain& dom, const Point& x0, const Vec& p0, bool feedback_on,
                  int N, double t0 = 0.0, double contact_tol = -1.0);

}  // namespace sccv
