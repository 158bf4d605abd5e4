#pragma once

#include <vector>

#include "sccv/geometry.hpp"

namespace sccv {

// Piecewise-linear arc sampled on a uniform grid of N + 1 knots over [t0, t1].
struct Trajectory {
  double t0 = 0.0;
  double t1 = 1.0;
  std::vector<Point> knots;

  static Trajectory constant(double t0, double t1, int N, const Point& x);

  int N() const { return static_cast<int>(knots.size()) - 1; }
  int dim() const { return knots.empty() ? 0 : static_cast<int>(knots.front().size()); }
  double dt() const { return (t1 - t0) / N(); }
  double time(int k) const { return t0 + (t1 - t0) * k / N(); }

  // Slope on interval [t_k, t_{k+1}], k in [0, N).
  Vec interval_velocity(int k) const { return (knots[k + 1] - knots[k]) / dt(); }
  // Centered in the interior, one-sided second order at both ends.
  Vec knot_velocity(int k) const;
  Point at(double t) const;

  double max_speed() const;
  // Integral of |gamma'|^2, exact for the piecewise-linear arc.
  double kinetic_energy() const;
  // Throws InvalidTrajectory unless N >= 8, t1 > t0 and all knots are finite.
  void validate() const;
};

}  // namespace sccv
