#pragma once

#include <string>
#include <vector>

#include "sccv/geometry.hpp"
#include "sccv/model.hpp"
#include "sccv/penalty.hpp"

namespace sccv {

struct ValueOptions {
  int N = 128;          // trajectory intervals per node solve
  int threads = 0;      // 0 uses all hardware threads
  double delta = 0.0;   // 0 selects delta_choice
  SolverOptions solver;
  bool keep_arcs = true;
};

struct NodeFailure {
  int time_index = 0;
  int point_index = 0;
  std::string message;
};

// u(t_i, x_j) on a tensor of times and points in the closed set.
struct ValueGrid {
  std::vector<double> times;
  std::vector<Point> points;
  Mat values;                     // times x points, NaN where a node failed
  std::vector<Trajectory> arcs;   // optimal arc per node, row-major, empty at t = T
  std::vector<NodeFailure> failures;
  int N = 0;
  double delta = 1.0;

  const Trajectory& arc(int i, int j) const { return arcs[i * points.size() + j]; }
};

std::vector<double> uniform_times(double T, int count);
// Tensor grid with per_axis nodes per axis on the bounding box, keeping
// points with b <= 0.
std::vector<Point> value_points(const Domain& dom, int per_axis);

// Each point runs its own chain backward from T, warm-starting every solve
// with the arc found at the next later time. Points outside the closed set are
// dropped.
ValueGrid compute_value(const Problem& prob, const Domain& dom, const std::vector<double>& times,
                        const std::vector<Point>& points, const ValueOptions& opt = {});

struct LipschitzReport {
  double Lx = 0.0;
  double Lt = 0.0;
  double Lt_interior = 0.0;  // excludes the interval ending at T
};
// Lx over same-time neighbour pairs (distance within 1.5 times the smallest
// spacing), Lt over consecutive times at each point.
LipschitzReport lipschitz_report(const ValueGrid& vg);

// Splits the optimal arc from sampled nodes at its middle knot and compares
// u(t, x) with the running cost of the head plus a fresh solve from the split
// point on the same grid spacing. Returns the worst gap.
double dpp_check(const Problem& prob, const Domain& dom, const ValueGrid& vg, int samples, std::uint64_t seed = 1,
                 const SolverOptions& solver = {});

}  // namespace sccv
