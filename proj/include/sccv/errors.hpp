#pragma once

#include <stdexcept>
#include <string>

namespace sccv {

enum class ErrorCode {
  OutsideTube,
  SigmaTooLarge,
  NewtonDiverged,
  InvalidProblem,
  InvalidTrajectory,
  MaxIterations,
  NonFiniteCost,
  ScheduleExhausted,
  NegativeMultiplier,
  LeftTube,
  UnbalancedMeasure,
  NoConvergence,
  InvalidConfig,
};

const char* to_string(ErrorCode code);

// All library failures surface as this exception; `code()` identifies the
// failure class, `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sccv
