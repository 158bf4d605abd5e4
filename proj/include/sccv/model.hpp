#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "sccv/geometry.hpp"

namespace sccv {

// Derivatives of f(t, x, v). fvx(i, j) = d^2 f / dv_i dx_j.
struct LagrangianEval {
  double f = 0.0;
  Vec fx, fv;
  Mat fvv, fvx, fxx;
};

// Running cost f(t, x, v), uniformly convex in v. `order` selects how much of
// LagrangianEval is filled: 0 value only, 1 adds gradients, 2 adds Hessians.
class Lagrangian {
 public:
  virtual ~Lagrangian() = default;
  virtual int dim() const = 0;
  virtual void eval(double t, const Point& x, const Vec& v, int order, LagrangianEval& out) const = 0;

  double value(double t, const Point& x, const Vec& v) const;
  Vec dx(double t, const Point& x, const Vec& v) const;
  Vec dv(double t, const Point& x, const Vec& v) const;
  LagrangianEval full(double t, const Point& x, const Vec& v) const;
};

// V(x) = <a, x>
struct LinearPotential {
  Vec a;
};
// V(x) = 1/2 (x - c)^T Q (x - c)
struct QuadraticPotential {
  Mat Q;
  Point center;
};
// V(x) = A exp(-|x - c|^2 / (2 w^2))
struct GaussianPotential {
  Point center;
  double amplitude = 1.0;
  double width = 1.0;
};
// Arbitrary time-dependent potential; fills V and, by order, DV and D2V.
struct TimePotential {
  std::function<void(double t, const Point& x, int order, double& V, Vec& DV, Mat& D2V)> fn;
};
using Potential = std::variant<LinearPotential, QuadraticPotential, GaussianPotential, TimePotential>;

// f = 1/2 s(x) <A0 v, v> + <c0 + c1 t, v> + sum V_k(t, x), s(x) = 1 + alpha |x|^2.
class QuadraticLagrangian final : public Lagrangian {
 public:
  QuadraticLagrangian(Mat A0, double alpha, Vec c0, Vec c1, std::vector<Potential> potentials);
  static std::shared_ptr<QuadraticLagrangian> kinetic(int n);

  int dim() const override { return static_cast<int>(A0_.rows()); }
  void eval(double t, const Point& x, const Vec& v, int order, LagrangianEval& out) const override;

  const Mat& A0() const { return A0_; }
  double alpha() const { return alpha_; }
  const Vec& c0() const { return c0_; }
  const Vec& c1() const { return c1_; }
  const std::vector<Potential>& potentials() const { return potentials_; }

 private:
  Mat A0_;
  double alpha_;
  Vec c0_, c1_;
  std::vector<Potential> potentials_;
};

// Terminal cost g(x).
class Terminal {
 public:
  virtual ~Terminal() = default;
  virtual double value(const Point& x) const = 0;
  virtual Vec grad(const Point& x) const = 0;
  virtual Mat hess(const Point& x) const = 0;
};

// g = 1/2 x^T Q x + <a, x> + c
class QuadraticTerminal final : public Terminal {
 public:
  QuadraticTerminal(Mat Q, Vec a, double c = 0.0) : Q_(std::move(Q)), a_(std::move(a)), c_(c) {}
  static std::shared_ptr<QuadraticTerminal> zero(int n);
  static std::shared_ptr<QuadraticTerminal> linear(Vec a);

  double value(const Point& x) const override { return 0.5 * x.dot(Q_ * x) + a_.dot(x) + c_; }
  Vec grad(const Point& x) const override { return Q_ * x + a_; }
  Mat hess(const Point&) const override { return Q_; }

  const Mat& Q() const { return Q_; }
  const Vec& a() const { return a_; }

 private:
  Mat Q_;
  Vec a_;
  double c_;
};

class FunctionTerminal final : public Terminal {
 public:
  using Fn = std::function<void(const Point& x, int order, double& g, Vec& Dg, Mat& D2g)>;
  explicit FunctionTerminal(Fn fn) : fn_(std::move(fn)) {}
  double value(const Point& x) const override;
  Vec grad(const Point& x) const override;
  Mat hess(const Point& x) const override;

 private:
  Fn fn_;
};

struct Problem {
  std::shared_ptr<const Lagrangian> lagrangian;
  std::shared_ptr<const Terminal> terminal;
  double horizon = 1.0;
  double mu = 1.0;
  double M = 0.0;
  double kappa = 0.0;

  int dim() const { return lagrangian->dim(); }
  // Throws InvalidProblem on mu < 1, kappa < 0, T <= 0, M < 0 or missing data.
  void validate() const;
};

struct LegendreResult {
  double H = 0.0;
  Vec vstar;
  double residual = 0.0;  // |p + D_v f(t, x, vstar)|
  int iterations = 0;
};

// D2ptH is the time derivative of D_pH. DpxH(i, j) = d(D_pH)_i / dx_j.
struct HamiltonianDerivs {
  double H = 0.0;
  Vec vstar, DxH, DpH;
  Mat DppH, DpxH;
  Vec DptH;
};

// H(t, x, p) = sup_v { -<p, v> - f(t, x, v) }, evaluated by Newton on the
// concave maximization and differentiated through the duality v* = -D_pH.
class Hamiltonian {
 public:
  explicit Hamiltonian(Problem prob);

  const Problem& problem() const { return prob_; }
  LegendreResult legendre(double t, const Point& x, const Vec& p, const Vec* warm = nullptr) const;
  double value(double t, const Point& x, const Vec& p) const { return legendre(t, x, p).H; }
  HamiltonianDerivs derivs(double t, const Point& x, const Vec& p, bool with_time = true) const;
  double time_step() const { return 1e-6 * std::max(1.0, prob_.horizon); }

 private:
  Problem prob_;
};

LegendreResult legendre(const Problem& prob, double t, const Point& x, const Vec& p);
HamiltonianDerivs hamiltonian_derivs(const Problem& prob, double t, const Point& x, const Vec& p);

struct InequalityCheck {
  std::string name;
  bool pass = true;
  // Largest observed lhs - rhs; nonpositive when the inequality holds.
  double worst_margin = -std::numeric_limits<double>::infinity();
};

struct AssumptionOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  double v_radius = 4.0;
  double p_radius = 4.0;
};

// Measured constants are sampled maxima times 1.05.
struct AssumptionReport {
  std::vector<InequalityCheck> checks;
  double M_measured = 0.0;
  double C_mu_M = 0.0;
  double M_prime = 0.0;
  double C_mu_Mprime = 0.0;
  double fvv_min_eig = 0.0, fvv_max_eig = 0.0;
  double Hpp_min_eig = 0.0, Hpp_max_eig = 0.0;
  double sup_abs_g = 0.0;
  double sup_Dg = 0.0;

  bool passed() const;
  const InequalityCheck* find(const std::string& name) const;
};

// Samples (t, x, v) on [0, T] x U x B(0, v_radius) with U = {b <= rho0}.
AssumptionReport check_assumptions(const Problem& prob, const Domain& dom,
                                   const AssumptionOptions& opt = {});

// K = T (C(mu, M) + M) + 2 sup_U |g|.
double energy_bound(const Problem& prob, const AssumptionReport& rep);
double energy_bound(const Problem& prob, const Domain& dom);

// C1 = 8 mu + 8 mu |Dg|^2 + 2 C(mu, M') + kappa (T + 4 mu K)
double c1_constant(const Problem& prob, const AssumptionReport& rep, double K);
// L* = C(mu, M') (2 sqrt(mu C1) / delta + 1)
double lstar_bound(const Problem& prob, const AssumptionReport& rep, double K, double delta);

// Quintic smooth step: 0 on (-inf, 1/3], 1 on [2/3, inf), C^2.
double smooth_step(double u, double* d1 = nullptr, double* d2 = nullptr);

// f~ = xi(b/sigma) |v|^2/2 + (1 - xi(b/sigma)) f and g~ = (1 - xi(b/sigma)) g.
Problem extend_data(const Problem& prob, const Domain& dom, double sigma);

}  // namespace sccv
