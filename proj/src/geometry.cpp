#include "sccv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sccv/errors.hpp"

namespace sccv {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutsideTube: return "OutsideTube";
    case ErrorCode::SigmaTooLarge: return "SigmaTooLarge";
    case ErrorCode::NewtonDiverged: return "NewtonDiverged";
    case ErrorCode::InvalidProblem: return "InvalidProblem";
    case ErrorCode::InvalidTrajectory: return "InvalidTrajectory";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::NonFiniteCost: return "NonFiniteCost";
    case ErrorCode::ScheduleExhausted: return "ScheduleExhausted";
    case ErrorCode::NegativeMultiplier: return "NegativeMultiplier";
    case ErrorCode::LeftTube: return "LeftTube";
    case ErrorCode::UnbalancedMeasure: return "UnbalancedMeasure";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

namespace {

struct EllipseProjection {
  Point q;       // nearest boundary point (local coordinates)
  bool outside;  // strictly outside the closed set
};

// Closest point on the axis-aligned ellipsoid sum(q_i^2 / a_i^2) = 1 to y.
// q_i = a_i^2 y_i / (a_i^2 + t) where t solves
// F(t) = sum (a_i y_i / (a_i^2 + t))^2 = 1 on (-a_min^2, inf).
EllipseProjection project_ellipse(const Vec& a, const Vec& y) {
  const int n = static_cast<int>(a.size());
  const double a_min = a.minCoeff();
  const double a_max = a.maxCoeff();
  const double lo_t = -a_min * a_min;

  double level = 0.0;
  for (int i = 0; i < n; ++i) level += (y[i] / a[i]) * (y[i] / a[i]);
  const bool outside = level > 1.0;

  auto is_min_axis = [&](int i) { return a[i] - a_min <= 1e-14 * a_max; };
  double min_group_norm2 = 0.0;
  for (int i = 0; i < n; ++i)
    if (is_min_axis(i)) min_group_norm2 += y[i] * y[i];

  Point q(n);
  if (min_group_norm2 == 0.0) {
    // y lies in the span of the longer axes; the root may sit at the pole
    // t = -a_min^2.
    double f_lim = 0.0;
    for (int i = 0; i < n; ++i) {
      if (is_min_axis(i)) continue;
      const double r = a[i] * y[i] / (a[i] * a[i] - a_min * a_min);
      f_lim += r * r;
    }
    if (f_lim <= 1.0) {
      double used = 0.0;
      int first = -1;
      for (int i = 0; i < n; ++i) {
        if (is_min_axis(i)) {
          q[i] = 0.0;
          if (first < 0) first = i;
          continue;
        }
        q[i] = a[i] * a[i] * y[i] / (a[i] * a[i] - a_min * a_min);
        used += (q[i] / a[i]) * (q[i] / a[i]);
      }
      q[first] = a_min * std::sqrt(std::max(0.0, 1.0 - used));
      return {q, outside};
    }
  }

  auto F = [&](double t, double* dF) {
    double f = 0.0, df = 0.0;
    for (int i = 0; i < n; ++i) {
      const double den = a[i] * a[i] + t;
      const double r = a[i] * y[i] / den;
      f += r * r;
      df += -2.0 * r * r / den;
    }
    *dF = df;
    return f - 1.0;
  };

  double lo = lo_t;
  double hi = std::max(0.0, a_max * y.norm());
  double t = outside ? hi : 0.5 * (lo + hi);
  if (!outside) t = 0.0;
  for (int it = 0; it < 200; ++it) {
    double df = 0.0;
    const double f = F(t, &df);
    if (f > 0.0) lo = t; else hi = t;
    if (f == 0.0) break;
    double next = t - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-17 * (1.0 + std::abs(t))) { t = next; break; }
    t = next;
  }
  for (int i = 0; i < n; ++i) q[i] = a[i] * a[i] * y[i] / (a[i] * a[i] + t);
  return {q, outside};
}

Vec ellipse_normal(const Vec& a, const Point& q) {
  Vec g = q.array() / (a.array() * a.array());
  return g / g.norm();
}

// Second fundamental form of the ellipsoid at q, as a symmetric operator that
// annihilates the normal.
Mat ellipse_shape_operator(const Vec& a, const Point& q) {
  const int n = static_cast<int>(a.size());
  Vec grad_phi = 2.0 * q.array() / (a.array() * a.array());
  const double gn = grad_phi.norm();
  Vec nrm = grad_phi / gn;
  Mat P = Mat::Identity(n, n) - nrm * nrm.transpose();
  Mat D2 = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) D2(i, i) = 2.0 / (a[i] * a[i]);
  return P * D2 * P / gn;
}

struct BoxParts {
  Vec q;     // |y| - (h - r)
  Vec w;     // max(q, 0)
  double wn;
};

BoxParts box_parts(const SmoothedBox& s, const Point& x) {
  Vec y = x - s.center;
  Vec inner = s.half_widths.array() - s.corner_radius;
  Vec q = y.array().abs() - inner.array();
  Vec w = q.array().max(0.0);
  return {q, w, w.norm()};
}

double sgn(double v) { return v < 0.0 ? -1.0 : 1.0; }

}  // namespace

Domain::Domain(Shape shape) : shape_(std::move(shape)) {
  if (const auto* ball = std::get_if<Ball>(&shape_)) {
    if (!(ball->radius > 0.0))
      throw Error(ErrorCode::InvalidConfig, "ball radius must be positive");
    dim_ = static_cast<int>(ball->center.size());
    rho0_ = ball->radius;
    diameter_ = 2.0 * ball->radius;
  } else if (const auto* ell = std::get_if<Ellipse>(&shape_)) {
    if (ell->center.size() != ell->semi_axes.size() || !(ell->semi_axes.minCoeff() > 0.0))
      throw Error(ErrorCode::InvalidConfig, "ellipse needs positive semi-axes matching the center");
    dim_ = static_cast<int>(ell->center.size());
    const double a_min = ell->semi_axes.minCoeff();
    const double a_max = ell->semi_axes.maxCoeff();
    rho0_ = a_min * a_min / a_max;
    diameter_ = 2.0 * a_max;
  } else {
    const auto& box = std::get<SmoothedBox>(shape_);
    if (box.center.size() != box.half_widths.size() || !(box.corner_radius > 0.0) ||
        !(box.half_widths.minCoeff() >= box.corner_radius))
      throw Error(ErrorCode::InvalidConfig,
                  "smoothed box needs half-widths >= corner radius > 0");
    dim_ = static_cast<int>(box.center.size());
    rho0_ = box.corner_radius;
    Vec inner = box.half_widths.array() - box.corner_radius;
    diameter_ = 2.0 * inner.norm() + 2.0 * box.corner_radius;
  }
  if (dim_ < 1 || dim_ > 3) throw Error(ErrorCode::InvalidConfig, "dimension must be 1, 2 or 3");
}

Domain Domain::ball(Point center, double radius) { return Domain(Ball{std::move(center), radius}); }

Domain Domain::ellipse(Point center, Vec semi_axes) {
  return Domain(Ellipse{std::move(center), std::move(semi_axes)});
}

Domain Domain::smoothed_box(Point center, Vec half_widths, double corner_radius) {
  return Domain(SmoothedBox{std::move(center), std::move(half_widths), corner_radius});
}

Point Domain::lower() const {
  return std::visit(
      [](const auto& s) -> Point {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Ball>) return s.center.array() - s.radius;
        else if constexpr (std::is_same_v<S, Ellipse>) return s.center - s.semi_axes;
        else return s.center - s.half_widths;
      },
      shape_);
}

Point Domain::upper() const {
  return std::visit(
      [](const auto& s) -> Point {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Ball>) return s.center.array() + s.radius;
        else if constexpr (std::is_same_v<S, Ellipse>) return s.center + s.semi_axes;
        else return s.center + s.half_widths;
      },
      shape_);
}

double Domain::b(const Point& x) const {
  if (const auto* ball = std::get_if<Ball>(&shape_)) return (x - ball->center).norm() - ball->radius;
  if (const auto* ell = std::get_if<Ellipse>(&shape_)) {
    Vec y = x - ell->center;
    auto proj = project_ellipse(ell->semi_axes, y);
    const double d = (y - proj.q).norm();
    return proj.outside ? d : -d;
  }
  const auto& box = std::get<SmoothedBox>(shape_);
  auto parts = box_parts(box, x);
  return parts.wn + std::min(parts.q.maxCoeff(), 0.0) - box.corner_radius;
}

Vec Domain::grad(const Point& x) const {
  if (const auto* ball = std::get_if<Ball>(&shape_)) {
    Vec y = x - ball->center;
    const double r = y.norm();
    if (r == 0.0) {
      Vec e = Vec::Zero(dim_);
      e[0] = 1.0;
      return e;
    }
    return y / r;
  }
  if (const auto* ell = std::get_if<Ellipse>(&shape_)) {
    auto proj = project_ellipse(ell->semi_axes, x - ell->center);
    return ellipse_normal(ell->semi_axes, proj.q);
  }
  const auto& box = std::get<SmoothedBox>(shape_);
  auto parts = box_parts(box, x);
  Vec y = x - box.center;
  Vec g = Vec::Zero(dim_);
  if (parts.wn > 0.0) {
    for (int i = 0; i < dim_; ++i) g[i] = sgn(y[i]) * parts.w[i] / parts.wn;
  } else {
    Eigen::Index k = 0;
    parts.q.maxCoeff(&k);
    g[k] = sgn(y[k]);
  }
  return g;
}

Mat Domain::hess(const Point& x) const {
  if (const auto* ball = std::get_if<Ball>(&shape_)) {
    Vec y = x - ball->center;
    const double r = y.norm();
    if (r == 0.0) return Mat::Zero(dim_, dim_);
    Vec nrm = y / r;
    return (Mat::Identity(dim_, dim_) - nrm * nrm.transpose()) / r;
  }
  if (const auto* ell = std::get_if<Ellipse>(&shape_)) {
    Vec y = x - ell->center;
    auto proj = project_ellipse(ell->semi_axes, y);
    const double d = (y - proj.q).norm();
    const double bx = proj.outside ? d : -d;
    Mat S = ellipse_shape_operator(ell->semi_axes, proj.q);
    Mat A = Mat::Identity(dim_, dim_) + bx * S;
    Mat H = S * A.inverse();
    return 0.5 * (H + H.transpose());
  }
  const auto& box = std::get<SmoothedBox>(shape_);
  auto parts = box_parts(box, x);
  Mat H = Mat::Zero(dim_, dim_);
  if (parts.wn == 0.0) return H;
  Vec y = x - box.center;
  Vec u(dim_);
  for (int i = 0; i < dim_; ++i) u[i] = sgn(y[i]) * parts.w[i] / parts.wn;
  for (int i = 0; i < dim_; ++i) {
    if (parts.q[i] <= 0.0) continue;
    for (int j = 0; j < dim_; ++j) {
      if (parts.q[j] <= 0.0) continue;
      H(i, j) = ((i == j ? 1.0 : 0.0) - u[i] * u[j]) / parts.wn;
    }
  }
  return H;
}

Point Domain::nearest_boundary_point(const Point& x) const {
  if (const auto* ell = std::get_if<Ellipse>(&shape_)) {
    auto proj = project_ellipse(ell->semi_axes, x - ell->center);
    return ell->center + proj.q;
  }
  return x - b(x) * grad(x);
}

namespace {

// Every supported shape is convex, so b is C^2 with bounded Hessian on the
// whole exterior; only the inner side of the tube is restricted.
void require_tube(const Domain& dom, double bx) {
  if (!(bx > -dom.rho0()) || !std::isfinite(bx)) {
    throw Error(ErrorCode::OutsideTube, "b(x) = " + std::to_string(bx) +
                                            " is not above -rho0 = " + std::to_string(-dom.rho0()));
  }
}

}  // namespace

double signed_distance(const Domain& dom, const Point& x) { return dom.b(x); }

double distance(const Domain& dom, const Point& x) { return std::max(dom.b(x), 0.0); }

Vec grad_b(const Domain& dom, const Point& x) {
  require_tube(dom, dom.b(x));
  return dom.grad(x);
}

Mat hess_b(const Domain& dom, const Point& x) {
  require_tube(dom, dom.b(x));
  return dom.hess(x);
}

Point project(const Domain& dom, const Point& x) {
  require_tube(dom, dom.b(x));
  return dom.nearest_boundary_point(x);
}

SubdiffDescription subdiff_distance(const Domain& dom, const Point& x) {
  const double bx = dom.b(x);
  SubdiffDescription out;
  if (bx < -dom.tau_bdry()) {
    out.kind = SubdiffDescription::Kind::Zero;
    out.direction = Vec::Zero(dom.dim());
    return out;
  }
  require_tube(dom, bx);
  out.direction = dom.grad(x);
  if (bx <= dom.tau_bdry()) {
    out.kind = SubdiffDescription::Kind::Segment;
    out.lo = 0.0;
    out.hi = 1.0;
  } else {
    out.kind = SubdiffDescription::Kind::Gradient;
    out.lo = out.hi = 1.0;
  }
  return out;
}

Point sample_region(const Domain& dom, double margin, std::mt19937_64& rng) {
  Point lo = dom.lower().array() - margin;
  Point hi = dom.upper().array() + margin;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point x(dom.dim());
  for (;;) {
    for (int i = 0; i < dom.dim(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
    if (dom.b(x) <= margin) return x;
  }
}

std::vector<Point> region_grid(const Domain& dom, int per_axis, double margin) {
  const int n = dom.dim();
  Point lo = dom.lower().array() - margin;
  Point hi = dom.upper().array() + margin;
  std::vector<Point> out;
  std::vector<int> idx(n, 0);
  for (;;) {
    Point x(n);
    for (int i = 0; i < n; ++i)
      x[i] = per_axis == 1 ? 0.5 * (lo[i] + hi[i])
                           : lo[i] + (hi[i] - lo[i]) * idx[i] / double(per_axis - 1);
    if (dom.b(x) <= margin) out.push_back(x);
    int k = 0;
    while (k < n && ++idx[k] == per_axis) idx[k++] = 0;
    if (k == n) break;
  }
  return out;
}

bool GeometryReport::passed() const {
  return unit_gradient < 1e-9 && hessian_null < 1e-7 && hessian_symmetry < 1e-12 && projection < 1e-8 &&
         fd_gradient < 1e-8 && fd_hessian < 1e-5 && subdiff_mismatches == 0;
}

GeometryReport geometry_invariants(const Domain& dom, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = dom.dim();
  const double rho = dom.rho0();
  Point lo = dom.lower().array() - rho;
  Point hi = dom.upper().array() + rho;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto* box = std::get_if<SmoothedBox>(&dom.shape());
  auto near_seam = [&](const Point& x) {
    if (!box) return false;
    for (int i = 0; i < n; ++i)
      if (std::abs(std::abs(x[i] - box->center[i]) - (box->half_widths[i] - box->corner_radius)) < 1e-3) return true;
    return false;
  };

  GeometryReport rep;
  const double h = 1e-5;
  while (rep.samples < samples) {
    Point x(n);
    for (int i = 0; i < n; ++i) x[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
    const double bx = dom.b(x);
    if (!(std::abs(bx) < 0.95 * rho)) continue;
    ++rep.samples;
    const Vec g = grad_b(dom, x);
    const Mat H = hess_b(dom, x);
    rep.unit_gradient = std::max(rep.unit_gradient, std::abs(g.norm() - 1.0));
    rep.hessian_null = std::max(rep.hessian_null, (H * g).norm());
    rep.hessian_symmetry = std::max(rep.hessian_symmetry, (H - H.transpose()).norm());
    rep.projection = std::max(rep.projection, (x - project(dom, x) - bx * g).norm());

    if (std::abs(bx) < 0.7 * rho && !near_seam(x)) {
      ++rep.fd_points;
      for (int i = 0; i < n; ++i) {
        Point xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        rep.fd_gradient = std::max(rep.fd_gradient, std::abs((dom.b(xp) - dom.b(xm)) / (2 * h) - g[i]));
        rep.fd_hessian = std::max(rep.fd_hessian, ((dom.grad(xp) - dom.grad(xm)) / (2 * h) - H.col(i)).norm());
      }
    }

    // Case table: interior points see d = 0 nearby, exterior points the
    // gradient of d, boundary points the slopes 1 outward and 0 inward.
    const Point y = project(dom, x);
    for (const Point& z : {x, y}) {
      const auto sd = subdiff_distance(dom, z);
      const double bz = dom.b(z);
      const Vec nz = dom.grad(z);
      bool ok;
      if (bz < -dom.tau_bdry()) {
        const double s = std::min(h, 0.5 * std::abs(bz));
        ok = sd.kind == SubdiffDescription::Kind::Zero && distance(dom, z + s * nz) == 0.0 &&
             distance(dom, z - s * nz) == 0.0;
      } else if (bz > dom.tau_bdry()) {
        const double slope = (distance(dom, z + h * nz) - distance(dom, z)) / h;
        ok = sd.kind == SubdiffDescription::Kind::Gradient && (sd.direction - nz).norm() < 1e-12 &&
             std::abs(slope - 1.0) < 1e-6;
      } else {
        const double out_slope = (distance(dom, z + h * nz) - distance(dom, z)) / h;
        const double in_slope = (distance(dom, z - h * nz) - distance(dom, z)) / h;
        ok = sd.kind == SubdiffDescription::Kind::Segment && sd.lo == 0.0 && sd.hi == 1.0 &&
             std::abs(out_slope - 1.0) < 1e-3 && std::abs(in_slope) < 1e-3;
      }
      ++rep.subdiff_checked;
      if (!ok) ++rep.subdiff_mismatches;
    }
  }
  return rep;
}

}  // namespace sccv
