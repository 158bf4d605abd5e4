#pragma once

// Reference computations shared by the unit tests and the acceptance runner.
// None of these call into the solver code under test.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                          double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

// Adaptive Simpson with Richardson correction.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50);
}

// Pull of strength P along e1 from the origin inside the unit disk, L = |v|^2/2,
// running cost -P x1, g = 0. The free arc solves x1'' = -P with x1(0) = 0 and
// hits the wall at rest; afterwards the arc stays at (1, 0).
struct WallPull {
  double P = 3.0;
  double T = 1.0;
  double contact_time() const { return std::sqrt(2.0 / P); }
  double x1(double t) const {
    const double tau = contact_time();
    if (t >= tau) return 1.0;
    return P * tau * t - 0.5 * P * t * t;
  }
  double v1(double t) const { return t >= contact_time() ? 0.0 : P * (contact_time() - t); }
  double cost() const {
    return integrate([this](double t) { return 0.5 * v1(t) * v1(t) - P * x1(t); }, 0.0, contact_time()) -
           P * (T - contact_time());
  }
};

// Discrete constrained problem on a uniform grid: trapezoid of
// |v|^2/2 + <a_run, x> on each interval plus <a_T, x_N>, subject to
// |x_k - c| <= r at every free knot. Solved by a primal log-barrier method
// with sparse LDL^T Newton steps. Returns the knots (x_0 first) and the cost.
struct BarrierResult {
  std::vector<Eigen::Vector2d> knots;
  double cost = 0.0;
};

inline BarrierResult barrier_disk(Eigen::Vector2d x0, Eigen::Vector2d a_run, Eigen::Vector2d a_T,
                                  Eigen::Vector2d c, double r, double T, int N) {
  const double h = T / N;
  const int m = 2 * N;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < N; ++k) z.segment<2>(2 * k) = x0;
  auto knot = [&](const Eigen::VectorXd& v, int k) -> Eigen::Vector2d {
    return k == 0 ? x0 : Eigen::Vector2d(v.segment<2>(2 * (k - 1)));
  };
  auto cost = [&](const Eigen::VectorXd& v) {
    double J = 0.0;
    for (int k = 0; k < N; ++k) {
      const Eigen::Vector2d a = knot(v, k), b = knot(v, k + 1);
      J += 0.5 * (b - a).squaredNorm() / h + 0.5 * h * a_run.dot(a + b);
    }
    return J + a_T.dot(knot(v, N));
  };
  auto phi = [&](const Eigen::VectorXd& v, double mu) {
    double J = cost(v);
    for (int k = 1; k <= N; ++k) {
      const double s = r * r - (knot(v, k) - c).squaredNorm();
      if (s <= 0.0) return std::numeric_limits<double>::infinity();
      J -= mu * std::log(s);
    }
    return J;
  };
  for (double mu = 1e-2; mu >= 1e-13; mu *= 0.1) {
    for (int it = 0; it < 200; ++it) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
      std::vector<Eigen::Triplet<double>> trip;
      for (int k = 1; k <= N; ++k) {
        const int i = 2 * (k - 1);
        const Eigen::Vector2d xk = knot(z, k);
        const Eigen::Vector2d xp = knot(z, k - 1);
        const double diag = (k < N ? 2.0 : 1.0) / h;
        Eigen::Vector2d gk = (xk - xp) / h + (k < N ? 0.5 : 0.25) * 2.0 * h * a_run;
        if (k < N) gk -= (knot(z, k + 1) - xk) / h;
        if (k == N) gk += a_T;
        const Eigen::Vector2d d = xk - c;
        const double s = r * r - d.squaredNorm();
        gk += mu * 2.0 * d / s;
        const Eigen::Matrix2d Hb = mu * (2.0 / s * Eigen::Matrix2d::Identity() + 4.0 / (s * s) * d * d.transpose());
        g.segment<2>(i) = gk;
        for (int p = 0; p < 2; ++p) {
          for (int q = 0; q < 2; ++q) trip.emplace_back(i + p, i + q, Hb(p, q) + (p == q ? diag : 0.0));
          if (k < N) {
            trip.emplace_back(i + p, i + 2 + p, -1.0 / h);
            trip.emplace_back(i + 2 + p, i + p, -1.0 / h);
          }
        }
      }
      Eigen::SparseMatrix<double> H(m, m);
      H.setFromTriplets(trip.begin(), trip.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
      if (ldlt.info() != Eigen::Success) throw std::runtime_error("barrier oracle: factorization failed");
      const Eigen::VectorXd dz = ldlt.solve(-g);
      const double dec = -g.dot(dz);
      if (dec < 1e-20 * (1.0 + std::abs(cost(z)))) break;
      const double f0 = phi(z, mu);
      double a = 1.0;
      while (a > 1e-20) {
        const Eigen::VectorXd trial = z + a * dz;
        if (phi(trial, mu) <= f0 - 0.25 * a * dec) {
          z = trial;
          break;
        }
        a *= 0.5;
      }
      if (a <= 1e-20) break;
    }
  }
  BarrierResult out;
  for (int k = 0; k <= N; ++k) out.knots.push_back(knot(z, k));
  out.cost = cost(z);
  return out;
}

// W1 on the real line: the integral of |F_a - F_b| over the merged support.
inline double w1_line(const std::vector<double>& xa, const std::vector<double>& wa, const std::vector<double>& xb,
                      const std::vector<double>& wb) {
  std::vector<std::pair<double, double>> ev;  // (position, signed mass)
  for (std::size_t i = 0; i < xa.size(); ++i) ev.push_back({xa[i], wa[i]});
  for (std::size_t j = 0; j < xb.size(); ++j) ev.push_back({xb[j], -wb[j]});
  std::sort(ev.begin(), ev.end());
  double cdf = 0.0, total = 0.0;
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    cdf += ev[k].second;
    total += std::abs(cdf) * (ev[k + 1].first - ev[k].first);
  }
  return total;
}

// Exact transport cost for 4 x 4 supports by enumerating every basis of the
// transportation polytope: each choice of 7 cells whose equality system has
// full rank and a nonnegative solution is a vertex.
inline double transport_by_enumeration(const std::vector<Eigen::Vector2d>& xa, const std::vector<double>& wa,
                                       const std::vector<Eigen::Vector2d>& xb, const std::vector<double>& wb) {
  constexpr int m = 4, n = 4, k = m + n - 1;
  Eigen::Matrix<double, m + n, 1> rhs;
  for (int i = 0; i < m; ++i) rhs(i) = wa[i];
  for (int j = 0; j < n; ++j) rhs(m + j) = wb[j];
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << (m * n)); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    Eigen::Matrix<double, m + n, k> A = Eigen::Matrix<double, m + n, k>::Zero();
    int cells[k];
    int c = 0;
    for (int e = 0; e < m * n; ++e)
      if (mask & (1u << e)) {
        A(e / n, c) = 1.0;
        A(m + e % n, c) = 1.0;
        cells[c++] = e;
      }
    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, m + n, k>> qr(A);
    if (qr.rank() < k) continue;
    const Eigen::Matrix<double, k, 1> x = qr.solve(rhs);
    if ((A * x - rhs).norm() > 1e-12 || x.minCoeff() < -1e-13) continue;
    double cost = 0.0;
    for (int q = 0; q < k; ++q) cost += x(q) * (xa[cells[q] / n] - xb[cells[q] % n]).norm();
    best = std::min(best, cost);
  }
  return best;
}

// Free arc of L = |v|^2/2 + V(x) with zero terminal cost: x'' = DV(x),
// x(0) = x0, x'(T) = 0. RK4 with `steps` steps and Newton on the initial
// velocity with a finite-difference Jacobian, continued in the strength of V
// from 0 (where the arc is at rest) so Newton tracks the minimizing branch.
// Returns positions at the RK4 grid.
inline std::vector<Eigen::Vector2d> shoot_free_arc(const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& DV,
                                                   const Eigen::Vector2d& x0, double T, int steps) {
  using V4 = Eigen::Vector4d;
  const double h = T / steps;
  double strength = 0.0;
  auto rhs = [&](const V4& y) {
    V4 d;
    d.head<2>() = y.tail<2>();
    d.tail<2>() = strength * DV(y.head<2>());
    return d;
  };
  auto flow = [&](const Eigen::Vector2d& v0, std::vector<Eigen::Vector2d>* path) {
    V4 y;
    y << x0, v0;
    if (path) path->assign(1, x0);
    for (int s = 0; s < steps; ++s) {
      const V4 k1 = rhs(y), k2 = rhs(y + 0.5 * h * k1), k3 = rhs(y + 0.5 * h * k2), k4 = rhs(y + h * k3);
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (path) path->push_back(y.head<2>());
    }
    return Eigen::Vector2d(y.tail<2>());
  };
  Eigen::Vector2d v0 = Eigen::Vector2d::Zero();
  for (int level = 1; level <= 20; ++level) {
    strength = level / 20.0;
    for (int it = 0; it < 50; ++it) {
      const Eigen::Vector2d r = flow(v0, nullptr);
      if (r.norm() < 1e-13) break;
      Eigen::Matrix2d J;
      for (int c = 0; c < 2; ++c) {
        Eigen::Vector2d e = Eigen::Vector2d::Zero();
        e(c) = 1e-7;
        J.col(c) = (flow(v0 + e, nullptr) - flow(v0 - e, nullptr)) / 2e-7;
      }
      v0 -= J.inverse() * r;
    }
  }
  std::vector<Eigen::Vector2d> path;
  flow(v0, &path);
  return path;
}

}  // namespace oracle
