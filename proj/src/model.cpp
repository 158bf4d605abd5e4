#include "sccv/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sccv/errors.hpp"

namespace sccv {

double Lagrangian::value(double t, const Point& x, const Vec& v) const {
  LagrangianEval e;
  eval(t, x, v, 0, e);
  return e.f;
}

Vec Lagrangian::dx(double t, const Point& x, const Vec& v) const {
  LagrangianEval e;
  eval(t, x, v, 1, e);
  return e.fx;
}

Vec Lagrangian::dv(double t, const Point& x, const Vec& v) const {
  LagrangianEval e;
  eval(t, x, v, 1, e);
  return e.fv;
}

LagrangianEval Lagrangian::full(double t, const Point& x, const Vec& v) const {
  LagrangianEval e;
  eval(t, x, v, 2, e);
  return e;
}

QuadraticLagrangian::QuadraticLagrangian(Mat A0, double alpha, Vec c0, Vec c1,
                                         std::vector<Potential> potentials)
    : A0_(std::move(A0)), alpha_(alpha), c0_(std::move(c0)), c1_(std::move(c1)),
      potentials_(std::move(potentials)) {
  const int n = static_cast<int>(A0_.rows());
  if (A0_.cols() != n || n < 1) throw Error(ErrorCode::InvalidProblem, "A0 must be square");
  if ((A0_ - A0_.transpose()).norm() > 1e-12 * (1.0 + A0_.norm()))
    throw Error(ErrorCode::InvalidProblem, "A0 must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(A0_);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw Error(ErrorCode::InvalidProblem, "A0 must be positive definite");
  if (alpha_ < 0.0) throw Error(ErrorCode::InvalidProblem, "alpha must be nonnegative");
  if (c0_.size() == 0) c0_ = Vec::Zero(n);
  if (c1_.size() == 0) c1_ = Vec::Zero(n);
  if (c0_.size() != n || c1_.size() != n)
    throw Error(ErrorCode::InvalidProblem, "drift vectors must match the dimension");
}

std::shared_ptr<QuadraticLagrangian> QuadraticLagrangian::kinetic(int n) {
  return std::make_shared<QuadraticLagrangian>(Mat::Identity(n, n), 0.0, Vec::Zero(n), Vec::Zero(n),
                                               std::vector<Potential>{});
}

void QuadraticLagrangian::eval(double t, const Point& x, const Vec& v, int order,
                               LagrangianEval& out) const {
  const int n = dim();
  const double s = 1.0 + alpha_ * x.squaredNorm();
  const Vec Av = A0_ * v;
  const double vAv = v.dot(Av);
  const Vec c = c0_ + t * c1_;
  out.f = 0.5 * s * vAv + c.dot(v);
  if (order >= 1) {
    out.fx = alpha_ * vAv * x;
    out.fv = s * Av + c;
  }
  if (order >= 2) {
    out.fvv = s * A0_;
    out.fvx = 2.0 * alpha_ * Av * x.transpose();
    out.fxx = alpha_ * vAv * Mat::Identity(n, n);
  }
  for (const auto& pot : potentials_) {
    std::visit(
        [&](const auto& term) {
          using T = std::decay_t<decltype(term)>;
          if constexpr (std::is_same_v<T, LinearPotential>) {
            out.f += term.a.dot(x);
            if (order >= 1) out.fx += term.a;
          } else if constexpr (std::is_same_v<T, QuadraticPotential>) {
            const Vec y = x - term.center;
            const Vec Qy = term.Q * y;
            out.f += 0.5 * y.dot(Qy);
            if (order >= 1) out.fx += Qy;
            if (order >= 2) out.fxx += term.Q;
          } else if constexpr (std::is_same_v<T, GaussianPotential>) {
            const Vec y = x - term.center;
            const double w2 = term.width * term.width;
            const double e = term.amplitude * std::exp(-0.5 * y.squaredNorm() / w2);
            out.f += e;
            if (order >= 1) out.fx += -e / w2 * y;
            if (order >= 2)
              out.fxx += e / w2 * (y * y.transpose() / w2 - Mat::Identity(n, n));
          } else {
            double V = 0.0;
            Vec DV = Vec::Zero(n);
            Mat D2V = Mat::Zero(n, n);
            term.fn(t, x, order, V, DV, D2V);
            out.f += V;
            if (order >= 1) out.fx += DV;
            if (order >= 2) out.fxx += D2V;
          }
        },
        pot);
  }
}

std::shared_ptr<QuadraticTerminal> QuadraticTerminal::zero(int n) {
  return std::make_shared<QuadraticTerminal>(Mat::Zero(n, n), Vec::Zero(n));
}

std::shared_ptr<QuadraticTerminal> QuadraticTerminal::linear(Vec a) {
  const auto n = a.size();
  return std::make_shared<QuadraticTerminal>(Mat::Zero(n, n), std::move(a));
}

double FunctionTerminal::value(const Point& x) const {
  double g = 0.0;
  Vec Dg;
  Mat D2g;
  fn_(x, 0, g, Dg, D2g);
  return g;
}

Vec FunctionTerminal::grad(const Point& x) const {
  double g = 0.0;
  Vec Dg = Vec::Zero(x.size());
  Mat D2g;
  fn_(x, 1, g, Dg, D2g);
  return Dg;
}

Mat FunctionTerminal::hess(const Point& x) const {
  double g = 0.0;
  Vec Dg = Vec::Zero(x.size());
  Mat D2g = Mat::Zero(x.size(), x.size());
  fn_(x, 2, g, Dg, D2g);
  return D2g;
}

void Problem::validate() const {
  if (!lagrangian || !terminal) throw Error(ErrorCode::InvalidProblem, "missing Lagrangian or terminal cost");
  if (!(mu >= 1.0))
    throw Error(ErrorCode::InvalidProblem,
                "mu = " + std::to_string(mu) + " violates the convexity assumption: mu >= 1 is required");
  if (!(kappa >= 0.0)) throw Error(ErrorCode::InvalidProblem, "kappa must be >= 0");
  if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidProblem, "horizon T must be > 0");
  if (!(M >= 0.0)) throw Error(ErrorCode::InvalidProblem, "M must be >= 0");
}

Hamiltonian::Hamiltonian(Problem prob) : prob_(std::move(prob)) {}

LegendreResult Hamiltonian::legendre(double t, const Point& x, const Vec& p, const Vec* warm) const {
  const int n = prob_.dim();
  const auto& L = *prob_.lagrangian;
  Vec v = warm ? *warm : Vec::Zero(n);
  LagrangianEval e;
  L.eval(t, x, v, 2, e);
  const double tol = 1e-13 * (1.0 + p.norm() + e.fv.norm());
  LegendreResult out;
  for (int it = 0; it <= 50; ++it) {
    Vec r = p + e.fv;
    const double res = r.norm();
    out.iterations = it;
    if (res <= tol || it == 50) {
      out.residual = res;
      if (!std::isfinite(res) || res > 1e-10 * (1.0 + p.norm())) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "Legendre maximization did not converge: residual %.3e after %d steps",
                      res, it);
        throw Error(ErrorCode::NewtonDiverged, buf);
      }
      break;
    }
    Eigen::LLT<Mat> llt(e.fvv);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::NewtonDiverged, "D_vv f is not positive definite");
    const Vec step = -llt.solve(r);
    // Backtrack on the concave objective -<p, v> - f.
    const double phi0 = -p.dot(v) - e.f;
    const double slope = -r.dot(step);  // directional derivative, positive
    double a = 1.0;
    Vec trial;
    LagrangianEval et;
    for (int k = 0; k < 40; ++k) {
      trial = v + a * step;
      L.eval(t, x, trial, 2, et);
      const double phi = -p.dot(trial) - et.f;
      // Near the maximizer phi stops resolving the increase; the residual still does.
      if (phi >= phi0 + 1e-4 * a * slope || (p + et.fv).norm() < (1.0 - 1e-4 * a) * res) break;
      a *= 0.5;
    }
    v = trial;
    e = std::move(et);
  }
  out.vstar = v;
  out.H = -p.dot(v) - e.f;
  return out;
}

HamiltonianDerivs Hamiltonian::derivs(double t, const Point& x, const Vec& p, bool with_time) const {
  const int n = prob_.dim();
  auto lr = legendre(t, x, p);
  LagrangianEval e;
  prob_.lagrangian->eval(t, x, lr.vstar, 2, e);
  HamiltonianDerivs d;
  d.H = lr.H;
  d.vstar = lr.vstar;
  d.DpH = -lr.vstar;
  d.DxH = -e.fx;
  Eigen::LLT<Mat> llt(e.fvv);
  d.DppH = llt.solve(Mat::Identity(n, n));
  d.DppH = 0.5 * (d.DppH + d.DppH.transpose());
  d.DpxH = llt.solve(e.fvx);
  if (with_time) {
    const double h = time_step();
    auto lp = legendre(t + h, x, p, &lr.vstar);
    auto lm = legendre(t - h, x, p, &lr.vstar);
    d.DptH = -(lp.vstar - lm.vstar) / (2.0 * h);
  } else {
    d.DptH = Vec::Zero(n);
  }
  return d;
}

LegendreResult legendre(const Problem& prob, double t, const Point& x, const Vec& p) {
  return Hamiltonian(prob).legendre(t, x, p);
}

HamiltonianDerivs hamiltonian_derivs(const Problem& prob, double t, const Point& x, const Vec& p) {
  return Hamiltonian(prob).derivs(t, x, p);
}

bool AssumptionReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

const InequalityCheck* AssumptionReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

Vec sample_ball(int n, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = g(rng);
  const double nd = d.norm();
  if (nd == 0.0) return Vec::Zero(n);
  return d / nd * radius * std::pow(u(rng), 1.0 / n);
}

double op_norm(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

struct Tracker {
  InequalityCheck c;
  double tol;
  Tracker(std::string name, double tol_) : tol(tol_) { c.name = std::move(name); }
  void add(double lhs, double rhs) {
    const double m = lhs - rhs;
    c.worst_margin = std::max(c.worst_margin, m);
    if (!(m <= tol * (1.0 + std::abs(rhs)))) c.pass = false;
  }
};

}  // namespace

AssumptionReport check_assumptions(const Problem& prob, const Domain& dom, const AssumptionOptions& opt) {
  prob.validate();
  const int n = prob.dim();
  const double T = prob.horizon, mu = prob.mu, kappa = prob.kappa;
  const auto& L = *prob.lagrangian;
  const Hamiltonian ham(prob);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> ut(0.0, T);

  const double tol = 1e-10;
  Tracker bm("bm", tol), f2lo("f2_lower", tol), f2hi("f2_upper", tol), fvx("fvx", tol),
      lf1("lf1", tol), fvt("fvt", tol), h1lo("h1b_lower", tol), h1hi("h1b_upper", tol);
  double c_f = 0.0, c_h = 0.0, m_prime = 0.0, m_meas = 0.0;
  double fmin = std::numeric_limits<double>::infinity(), fmax = 0.0;
  double hmin = std::numeric_limits<double>::infinity(), hmax = 0.0;
  const Vec zero = Vec::Zero(n);

  for (int s = 0; s < std::max(1, opt.samples); ++s) {
    const double t = ut(rng), t2 = ut(rng);
    const Point x = sample_region(dom, dom.rho0(), rng);
    const Vec v = sample_ball(n, opt.v_radius, rng);
    const Vec p = sample_ball(n, opt.p_radius, rng);

    LagrangianEval e0, e, e2;
    L.eval(t, x, zero, 1, e0);
    const double bm_lhs = std::abs(e0.f) + e0.fx.norm() + e0.fv.norm();
    m_meas = std::max(m_meas, bm_lhs);
    bm.add(bm_lhs, prob.M);

    L.eval(t, x, v, 2, e);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (e.fvv + e.fvv.transpose()));
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    fmin = std::min(fmin, lo);
    fmax = std::max(fmax, hi);
    f2lo.add(1.0 / mu, lo);
    f2hi.add(hi, mu);
    const double nv = v.norm();
    fvx.add(op_norm(e.fvx), mu * (1.0 + nv));

    c_f = std::max({c_f, e.fv.norm() / (1.0 + nv), e.fx.norm() / (1.0 + nv * nv),
                    nv * nv / (4.0 * mu) - e.f, e.f - 4.0 * mu * nv * nv});

    L.eval(t2, x, v, 1, e2);
    lf1.add(std::abs(e.f - e2.f), kappa * (1.0 + nv * nv) * std::abs(t - t2));
    fvt.add((e.fv - e2.fv).norm(), kappa * (1.0 + nv) * std::abs(t - t2));

    const auto h0 = ham.derivs(t, x, zero, false);
    m_prime = std::max(m_prime, std::abs(h0.H) + h0.DxH.norm() + h0.DpH.norm());

    const auto h = ham.derivs(t, x, p, false);
    Eigen::SelfAdjointEigenSolver<Mat> hs(h.DppH);
    const double hlo = hs.eigenvalues().minCoeff(), hhi = hs.eigenvalues().maxCoeff();
    hmin = std::min(hmin, hlo);
    hmax = std::max(hmax, hhi);
    h1lo.add(1.0 / mu, hlo);
    h1hi.add(hhi, mu);
    const double np = p.norm();
    c_h = std::max({c_h, h.DpH.norm() / (1.0 + np), h.DxH.norm() / (1.0 + np * np),
                    np * np / (4.0 * mu) - h.H, h.H - 4.0 * mu * np * np,
                    op_norm(h.DpxH) / (1.0 + np)});
    if (kappa > 0.0 && t != t2) {
      const auto h2 = ham.derivs(t2, x, p, false);
      const double dt = std::abs(t - t2);
      c_h = std::max({c_h, std::abs(h.H - h2.H) / (kappa * (1.0 + np * np) * dt),
                      (h.DpH - h2.DpH).norm() / (kappa * (1.0 + np) * dt)});
    }
  }

  AssumptionReport rep;
  rep.checks = {bm.c, f2lo.c, f2hi.c, fvx.c, lf1.c, fvt.c, h1lo.c, h1hi.c};
  rep.M_measured = m_meas;
  rep.C_mu_M = 1.05 * c_f;
  rep.M_prime = m_prime;
  rep.C_mu_Mprime = 1.05 * c_h;
  rep.fvv_min_eig = fmin;
  rep.fvv_max_eig = fmax;
  rep.Hpp_min_eig = hmin;
  rep.Hpp_max_eig = hmax;

  // Terminal data: random samples plus a tensor grid, which reaches the
  // extremes of U that random points tend to miss.
  auto pts = region_grid(dom, n == 1 ? 401 : (n == 2 ? 61 : 21), dom.rho0());
  for (int s = 0; s < std::max(1, opt.samples); ++s) pts.push_back(sample_region(dom, dom.rho0(), rng));
  for (const auto& x : pts) {
    rep.sup_abs_g = std::max(rep.sup_abs_g, std::abs(prob.terminal->value(x)));
    rep.sup_Dg = std::max(rep.sup_Dg, prob.terminal->grad(x).norm());
  }
  return rep;
}

double energy_bound(const Problem& prob, const AssumptionReport& rep) {
  return prob.horizon * (rep.C_mu_M + prob.M) + 2.0 * rep.sup_abs_g;
}

double energy_bound(const Problem& prob, const Domain& dom) {
  return energy_bound(prob, check_assumptions(prob, dom));
}

double c1_constant(const Problem& prob, const AssumptionReport& rep, double K) {
  const double mu = prob.mu;
  return 8.0 * mu + 8.0 * mu * rep.sup_Dg * rep.sup_Dg + 2.0 * rep.C_mu_Mprime +
         prob.kappa * (prob.horizon + 4.0 * mu * K);
}

double lstar_bound(const Problem& prob, const AssumptionReport& rep, double K, double delta) {
  const double C1 = c1_constant(prob, rep, K);
  return rep.C_mu_Mprime * (2.0 * std::sqrt(prob.mu * C1) / delta + 1.0);
}

double smooth_step(double u, double* d1, double* d2) {
  if (u <= 1.0 / 3.0 || u >= 2.0 / 3.0) {
    if (d1) *d1 = 0.0;
    if (d2) *d2 = 0.0;
    return u <= 1.0 / 3.0 ? 0.0 : 1.0;
  }
  const double w = 3.0 * u - 1.0;
  if (d1) *d1 = 3.0 * 30.0 * w * w * (1.0 - w) * (1.0 - w);
  if (d2) *d2 = 9.0 * 60.0 * w * (1.0 - w) * (1.0 - 2.0 * w);
  return w * w * w * (10.0 + w * (-15.0 + 6.0 * w));
}

namespace {

struct Cutoff {
  double xi = 0.0;
  Vec dxi;
  Mat d2xi;
};

Cutoff cutoff(const Domain& dom, double sigma, const Point& x, int order) {
  const int n = dom.dim();
  const double b = dom.b(x);
  double s1 = 0.0, s2 = 0.0;
  Cutoff c;
  c.xi = smooth_step(b / sigma, &s1, &s2);
  c.dxi = Vec::Zero(n);
  c.d2xi = Mat::Zero(n, n);
  if (order >= 1 && (s1 != 0.0 || s2 != 0.0)) {
    const Vec g = dom.grad(x);
    c.dxi = s1 / sigma * g;
    if (order >= 2) c.d2xi = s2 / (sigma * sigma) * g * g.transpose() + s1 / sigma * dom.hess(x);
  }
  return c;
}

class ExtendedLagrangian final : public Lagrangian {
 public:
  ExtendedLagrangian(std::shared_ptr<const Lagrangian> base, Domain dom, double sigma)
      : base_(std::move(base)), dom_(std::move(dom)), sigma_(sigma) {}

  int dim() const override { return base_->dim(); }

  void eval(double t, const Point& x, const Vec& v, int order, LagrangianEval& out) const override {
    const int n = dim();
    const Cutoff c = cutoff(dom_, sigma_, x, order);
    const double k = 0.5 * v.squaredNorm();
    if (c.xi == 1.0) {
      out.f = k;
      if (order >= 1) {
        out.fx = Vec::Zero(n);
        out.fv = v;
      }
      if (order >= 2) {
        out.fvv = Mat::Identity(n, n);
        out.fvx = Mat::Zero(n, n);
        out.fxx = Mat::Zero(n, n);
      }
      return;
    }
    base_->eval(t, x, v, order, out);
    if (c.xi == 0.0 && c.dxi.isZero(0.0)) return;
    const double w = 1.0 - c.xi;
    const double gap = k - out.f;
    LagrangianEval b = out;
    out.f = w * b.f + c.xi * k;
    if (order >= 1) {
      out.fx = w * b.fx + gap * c.dxi;
      out.fv = w * b.fv + c.xi * v;
    }
    if (order >= 2) {
      out.fvv = w * b.fvv + c.xi * Mat::Identity(n, n);
      out.fvx = w * b.fvx + (v - b.fv) * c.dxi.transpose();
      out.fxx = w * b.fxx - b.fx * c.dxi.transpose() - c.dxi * b.fx.transpose() + gap * c.d2xi;
    }
  }

 private:
  std::shared_ptr<const Lagrangian> base_;
  Domain dom_;
  double sigma_;
};

class ExtendedTerminal final : public Terminal {
 public:
  ExtendedTerminal(std::shared_ptr<const Terminal> base, Domain dom, double sigma)
      : base_(std::move(base)), dom_(std::move(dom)), sigma_(sigma) {}

  double value(const Point& x) const override {
    const Cutoff c = cutoff(dom_, sigma_, x, 0);
    return c.xi == 1.0 ? 0.0 : (1.0 - c.xi) * base_->value(x);
  }
  Vec grad(const Point& x) const override {
    const Cutoff c = cutoff(dom_, sigma_, x, 1);
    if (c.xi == 1.0) return Vec::Zero(x.size());
    return (1.0 - c.xi) * base_->grad(x) - base_->value(x) * c.dxi;
  }
  Mat hess(const Point& x) const override {
    const Cutoff c = cutoff(dom_, sigma_, x, 2);
    if (c.xi == 1.0) return Mat::Zero(x.size(), x.size());
    const Vec Dg = base_->grad(x);
    return (1.0 - c.xi) * base_->hess(x) - Dg * c.dxi.transpose() - c.dxi * Dg.transpose() -
           base_->value(x) * c.d2xi;
  }

 private:
  std::shared_ptr<const Terminal> base_;
  Domain dom_;
  double sigma_;
};

}  // namespace

Problem extend_data(const Problem& prob, const Domain& dom, double sigma) {
  // U is the rho0-neighbourhood of the closed set, so dist(closure, complement of U) = rho0.
  if (!(sigma > 0.0) || sigma > dom.rho0())
    throw Error(ErrorCode::SigmaTooLarge,
                "sigma = " + std::to_string(sigma) + " must lie in (0, rho0 = " + std::to_string(dom.rho0()) + "]");
  Problem out = prob;
  out.lagrangian = std::make_shared<ExtendedLagrangian>(prob.lagrangian, dom, sigma);
  out.terminal = std::make_shared<ExtendedTerminal>(prob.terminal, dom, sigma);
  out.mu = std::max(1.0, prob.mu);
  return out;
}

}  // namespace sccv
