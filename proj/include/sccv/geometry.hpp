#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <variant>
#include <vector>

namespace sccv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Point = Eigen::VectorXd;

struct Ball {
  Point center;
  double radius = 1.0;
};

// Axis-aligned ellipsoid (ellipse for n = 2).
struct Ellipse {
  Point center;
  Vec semi_axes;
};

// Axis-aligned box with rounded corners: the Minkowski sum of an inner box of
// half-widths (half_widths - corner_radius) and a ball of radius corner_radius.
struct SmoothedBox {
  Point center;
  Vec half_widths;
  double corner_radius = 0.1;
};

using Shape = std::variant<Ball, Ellipse, SmoothedBox>;

// Smooth bounded constraint set described by its oriented boundary distance.
class Domain {
 public:
  explicit Domain(Shape shape);

  static Domain ball(Point center, double radius);
  static Domain ellipse(Point center, Vec semi_axes);
  static Domain smoothed_box(Point center, Vec half_widths, double corner_radius);

  const Shape& shape() const { return shape_; }
  int dim() const { return dim_; }
  // Radius of the two-sided tube around the boundary on which b is C^2.
  double rho0() const { return rho0_; }
  double diameter() const { return diameter_; }
  // |b(x)| <= tau_bdry classifies x as a boundary point.
  double tau_bdry() const { return 1e-9 * diameter_; }
  // Axis-aligned bounding box of the closed set.
  Point lower() const;
  Point upper() const;

  // Unchecked evaluators. They are valid everywhere outside the closed set and
  // inside it away from the medial axis; the public free functions below add
  // the tube precondition.
  double b(const Point& x) const;
  Vec grad(const Point& x) const;
  Mat hess(const Point& x) const;
  Point nearest_boundary_point(const Point& x) const;

 private:
  Shape shape_;
  int dim_ = 0;
  double rho0_ = 0.0;
  double diameter_ = 0.0;
};

double signed_distance(const Domain& dom, const Point& x);
double distance(const Domain& dom, const Point& x);
// The checked variants below throw OutsideTube when b(x) <= -rho0.
Vec grad_b(const Domain& dom, const Point& x);
Mat hess_b(const Domain& dom, const Point& x);
Point project(const Domain& dom, const Point& x);

// Limiting subdifferential of the distance function d = max(b, 0).
struct SubdiffDescription {
  enum class Kind { Zero, Gradient, Segment };
  Kind kind = Kind::Zero;
  // Gradient: the single element. Segment: the generator, the set being
  // {t * direction : t in [lo, hi]}.
  Vec direction;
  double lo = 0.0;
  double hi = 0.0;
};

SubdiffDescription subdiff_distance(const Domain& dom, const Point& x);

// Uniform sample of {b <= margin} by rejection from the enlarged bounding box.
Point sample_region(const Domain& dom, double margin, std::mt19937_64& rng);
// Tensor grid over the enlarged bounding box, restricted to {b <= margin}.
std::vector<Point> region_grid(const Domain& dom, int per_axis, double margin);

// Sampled invariants of b on the tube |b| < 0.95 rho0: unit gradient, null
// normal direction and symmetry of the Hessian, projection identity, central
// differences (h = 1e-5, on |b| < 0.7 rho0 away from box seams) and the
// three-case subdifferential table checked by one-sided differences of d.
struct GeometryReport {
  int samples = 0;
  int fd_points = 0;
  double unit_gradient = 0.0;
  double hessian_null = 0.0;
  double hessian_symmetry = 0.0;
  double projection = 0.0;
  double fd_gradient = 0.0;
  double fd_hessian = 0.0;
  int subdiff_mismatches = 0;
  int subdiff_checked = 0;

  bool passed() const;
};
GeometryReport geometry_invariants(const Domain& dom, int samples = 10000, std::uint64_t seed = 1);

}  // namespace sccv
