#include "sccv/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "sccv/errors.hpp"

namespace sccv {

Trajectory Trajectory::constant(double t0, double t1, int N, const Point& x) {
  Trajectory g;
  g.t0 = t0;
  g.t1 = t1;
  g.knots.assign(N + 1, x);
  return g;
}

Vec Trajectory::knot_velocity(int k) const {
  const int n = N();
  const double h = dt();
  if (k == 0) return (-3.0 * knots[0] + 4.0 * knots[1] - knots[2]) / (2.0 * h);
  if (k == n) return (3.0 * knots[n] - 4.0 * knots[n - 1] + knots[n - 2]) / (2.0 * h);
  return (knots[k + 1] - knots[k - 1]) / (2.0 * h);
}

Point Trajectory::at(double t) const {
  const int n = N();
  const double s = std::clamp((t - t0) / (t1 - t0) * n, 0.0, static_cast<double>(n));
  const int k = std::min(static_cast<int>(std::floor(s)), n - 1);
  const double w = s - k;
  return (1.0 - w) * knots[k] + w * knots[k + 1];
}

double Trajectory::max_speed() const {
  double m = 0.0;
  for (int k = 0; k < N(); ++k) m = std::max(m, interval_velocity(k).norm());
  return m;
}

double Trajectory::kinetic_energy() const {
  double e = 0.0;
  for (int k = 0; k < N(); ++k) e += interval_velocity(k).squaredNorm() * dt();
  return e;
}

void Trajectory::validate() const {
  if (N() < 8) throw Error(ErrorCode::InvalidTrajectory, "a trajectory needs at least 8 intervals");
  if (!(t1 > t0)) throw Error(ErrorCode::InvalidTrajectory, "t1 must exceed t0");
  const int n = dim();
  for (const auto& x : knots)
    if (x.size() != n || !x.allFinite()) throw Error(ErrorCode::InvalidTrajectory, "non-finite or ragged knot");
}

}  // namespace sccv
