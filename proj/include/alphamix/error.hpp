#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace alphamix {

enum class ErrorCode {
  DimensionMismatch,
  EmptyInput,
  InvalidInput,
  SharpeUndefined,
  DegenerateWeights,
  NotSymmetric,
  NotPositiveDefinite,
  NegativeAlpha,
  InvalidTarget,
  InfeasibleSharpe,
  InfeasibleTarget,
  BelowSharpeMaxPnl,
  DegenerateInput,
  NumericalFailure,
  NonConvergence,
  SingularSystem,
  NotCorrelation,
  MissingTurnovers,
  CapacityExceeded,
  UnboundedCapacity,
  NoProfitableScale,
  IllConditioned,
  ParseError,
  DegenerateStream,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace alphamix
