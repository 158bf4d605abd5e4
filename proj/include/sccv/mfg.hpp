#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sccv/errors.hpp"
#include "sccv/geometry.hpp"
#include "sccv/model.hpp"
#include "sccv/penalty.hpp"
#include "sccv/trajectory.hpp"
#include "sccv/value.hpp"

namespace sccv {

// Weighted atoms on the closed set.
struct DiscreteMeasure {
  std::vector<Point> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
  double total() const;
  // Throws UnbalancedMeasure unless weights are positive and sum to 1 within tol.
  void validate_probability(double tol = 1e-12) const;
};

// Exact optimal transport cost with ground metric |x - y|, by the
// transportation simplex. Throws UnbalancedMeasure if the masses differ by
// more than 1e-9.
double kantorovich_d1(const DiscreteMeasure& a, const DiscreteMeasure& b);

struct Particle {
  Trajectory gamma;
  double weight = 0.0;
  int atom = 0;  // index of the starting atom in m0
};

// Finite trajectory measure. All particles share one time grid on [0, T].
struct TrajectoryMeasure {
  DiscreteMeasure m0;
  std::vector<Particle> particles;

  // Weights sum to 1, every particle starts at its atom, the atom masses of
  // m0 are reproduced and all grids agree.
  void validate(double tol = 1e-12) const;
  // e_0 push-forward with weights aggregated per atom.
  DiscreteMeasure initial_marginal() const;
  double max_speed() const;
};

// Every atom stays at rest for the whole horizon.
TrajectoryMeasure constant_measure(const DiscreteMeasure& m0, double T, int N);

struct MeasureFlow {
  std::vector<double> times;
  std::vector<DiscreteMeasure> measures;
};

// m(t) places weight w_j at gamma_j(t), linear between knots.
DiscreteMeasure evaluate_at(const TrajectoryMeasure& eta, double t);
MeasureFlow evaluate_flow(const TrajectoryMeasure& eta, const std::vector<double>& times);
// Knot times of the shared particle grid.
std::vector<double> flow_times(const TrajectoryMeasure& eta);
// max over consecutive slices of d1 / dt.
double lip_flow(const MeasureFlow& flow);
// max over intervals of sum_j w_j |gamma_j'|, a Lipschitz constant of the
// interpolated flow in d1.
double flow_speed_bound(const TrajectoryMeasure& eta);

// Mean-field coupling F(x, m) and G(x, m) with their x-derivatives.
class Coupling {
 public:
  virtual ~Coupling() = default;
  virtual void running(const Point& x, const DiscreteMeasure& m, int order, double& F, Vec& DF,
                       Mat& D2F) const = 0;
  virtual void terminal(const Point& x, const DiscreteMeasure& m, int order, double& G, Vec& DG,
                        Mat& D2G) const = 0;
  // Constant of the Lipschitz bound in m and of the gradient bound in x.
  virtual double kappa() const = 0;
  // Upper bound of sup |F| + sup |G| over probability measures.
  virtual double sup_bound() const = 0;
  // True when F and G do not depend on m.
  virtual bool decoupled() const { return false; }
};

// F(x, m) = sum_j w_j phi_F(x - y_j), G likewise, with Gaussian bumps
// phi(z) = A exp(-|z|^2 / (2 s^2)). Both kernels are positive definite.
class KernelCoupling final : public Coupling {
 public:
  KernelCoupling(double amp_F, double width_F, double amp_G = 0.0, double width_G = 1.0);

  void running(const Point& x, const DiscreteMeasure& m, int order, double& F, Vec& DF, Mat& D2F) const override;
  void terminal(const Point& x, const DiscreteMeasure& m, int order, double& G, Vec& DG, Mat& D2G) const override;
  double kappa() const override;
  double sup_bound() const override { return amp_F_ + amp_G_; }
  bool decoupled() const override { return amp_F_ == 0.0 && amp_G_ == 0.0; }

  double amp_F() const { return amp_F_; }
  double width_F() const { return width_F_; }
  double amp_G() const { return amp_G_; }
  double width_G() const { return width_G_; }

 private:
  double amp_F_, width_F_, amp_G_, width_G_;
};

// Sampled (D1) and (D2) checks on random atom measures and points of {b <= rho0}.
struct CouplingReport {
  InequalityCheck lipschitz_in_m;
  InequalityCheck gradient_bound;
  bool passed() const { return lipschitz_in_m.pass && gradient_bound.pass; }
};
CouplingReport check_coupling(const Coupling& coupling, const Domain& dom, int samples = 200,
                              std::uint64_t seed = 1);

// Problem with f = L + F(x, m(t)) and terminal g + G(x, m(T)), where m is the
// flow of eta. kappa is the coupling constant times flow_speed_bound(eta) and
// M adds the coupling bounds to the base M.
Problem coupled_problem(const Problem& base, std::shared_ptr<const Coupling> coupling, const TrajectoryMeasure& eta);

// Velocity bound of minimizers for the coupled problem: the L* constant with
// the measured assumption constants of coupled_problem.
double l0_bound(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                const TrajectoryMeasure& eta);

struct MfgOptions {
  int N = 64;            // trajectory intervals
  int threads = 0;
  double alpha = 0.5;    // damping
  double tol = 1e-3;     // flow residual
  int max_iter = 50;
  double prune_dist = 1e-8;     // sup-norm distance for merging particles of one atom
  double prune_weight = 1e-10;  // lighter particles fold into their nearest sibling
  bool tie_check = false;       // also solve from rest and flag distant cost-equal minimizers
  SolverOptions solver;
};

struct BestResponse {
  TrajectoryMeasure eta;       // one optimal particle per atom, weights of m0
  std::vector<double> costs;   // optimal penalized cost per atom
  std::vector<int> ties;       // atoms with suspected multiple minimizers
  double max_speed = 0.0;
  double L0 = 0.0;
};

// Solves every atom's problem against the flow of eta. warm, if given, holds
// one start arc per atom. Failures are rethrown with the atom index.
BestResponse best_response(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                           const TrajectoryMeasure& eta, const MfgOptions& opt = {},
                           const std::vector<Trajectory>* warm = nullptr);

// max over the shared knot times of d1(m^a(t), m^b(t)).
double flow_distance(const TrajectoryMeasure& a, const TrajectoryMeasure& b);

struct FixedPointResult {
  TrajectoryMeasure mixture;   // damped iterate at which the residual met tol
  TrajectoryMeasure eta;       // best response to the mixture, one particle per atom
  std::vector<double> history; // residual per iteration
  int iterations = 0;
  double L0 = 0.0;
};

class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& message, std::vector<double> history)
      : Error(ErrorCode::NoConvergence, message), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

// Damped iteration eta <- (1 - alpha) eta + alpha BR(eta) from eta0 (rest at
// m0 when null). Stops once max_t d1(m^eta(t), m^BR(eta)(t)) <= tol and
// returns the best response to that iterate as the pure equilibrium
// representative. Throws NoConvergenceError after max_iter iterations.
FixedPointResult fixed_point(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                             const DiscreteMeasure& m0, const MfgOptions& opt = {},
                             const TrajectoryMeasure* eta0 = nullptr);

// Combines two measures with the same m0 as (1 - alpha) a + alpha b, merging
// particles of one atom closer than prune_dist and folding lighter than
// prune_weight ones into their nearest sibling.
TrajectoryMeasure mix_measures(const TrajectoryMeasure& a, const TrajectoryMeasure& b, double alpha,
                               double prune_dist = 1e-8, double prune_weight = 1e-10);

// Cost of every particle against the flow of eta compared with a fresh best
// response from its start.
struct Certificate {
  std::vector<double> particle_costs;
  std::vector<double> optimal_costs;
  double max_gap = 0.0;
  double residual = 0.0;  // flow distance between eta and its best response
  double max_speed = 0.0;
  double L0 = 0.0;
};
Certificate equilibrium_certificate(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                                    const TrajectoryMeasure& eta, const MfgOptions& opt = {});

struct MildSolution {
  ValueGrid u;
  MeasureFlow m;
  double lip_m = 0.0;
  double L0 = 0.0;
};
// u from the value module with f = L + F(x, m(t)) and m the flow of eta.
MildSolution mild_solution(const Problem& base, const Domain& dom, std::shared_ptr<const Coupling> coupling,
                           const TrajectoryMeasure& eta, const std::vector<double>& times,
                           const std::vector<Point>& points, const ValueOptions& opt = {});

struct MonotonicityEntry {
  double running = 0.0;   // integral of (F(x, m1) - F(x, m2)) d(m1 - m2)
  double terminal = 0.0;  // same for G
  double d1 = 0.0;
  bool nonnegative = false;
};
struct MonotonicityReport {
  std::vector<MonotonicityEntry> entries;
  bool all_nonnegative = true;
  double min_value = 0.0;
};
MonotonicityReport monotonicity_check(const Coupling& coupling,
                                      const std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>>& pairs,
                                      double tol = 1e-12);

}  // namespace sccv
