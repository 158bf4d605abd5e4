#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccv/geometry.hpp"
#include "sccv/mfg.hpp"
#include "sccv/model.hpp"
#include "sccv/penalty.hpp"
#include "sccv/pmp.hpp"
#include "sccv/value.hpp"

namespace sccv::cli {

struct ValueBlock {
  int times = 5;               // uniform time slices on [0, T]
  int per_axis = 10;           // tensor grid of the bounding box, points outside dropped
  std::vector<Point> points;   // explicit points replace the grid when given
  int N = 128;
  int dpp_samples = 8;
  bool refinement = true;      // also solve at N / 2 and report the gap
};

struct MfgBlock {
  double amp_F = 1.0, width_F = 0.5, amp_G = 0.0, width_G = 1.0;
  DiscreteMeasure m0;
  MfgOptions options;
  ValueBlock value;
};

struct PmpBlock {
  PmpOptions options;
  double adjoint_tol = 1e-3;
  std::string trajectory;   // input of pmp-check
  double epsilon = 0.0;     // 0 reads solve.json next to the trajectory
  double delta = 0.0;
};

struct RunConfig {
  std::optional<Domain> domain;
  Problem problem;
  std::optional<Point> x0;
  int N = 256;
  double delta = 0.0;  // 0 selects delta_choice
  SolverOptions solver;
  PmpBlock pmp;
  ValueBlock value;
  std::optional<MfgBlock> mfg;
  int geometry_samples = 10000;
  AssumptionOptions assumptions;
  std::uint64_t seed = 1;
  int threads = 0;
};

// Throws Error(InvalidConfig) naming the offending key, or InvalidProblem when
// the declared constants are out of range.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

std::shared_ptr<const Coupling> make_coupling(const MfgBlock& m);

}  // namespace sccv::cli
