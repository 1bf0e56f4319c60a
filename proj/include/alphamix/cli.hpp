#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "alphamix/error.hpp"

namespace alphamix::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kSolverFailure = 3;
inline constexpr int kInfeasible = 4;

int exit_code_for(ErrorCode code);

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace alphamix::cli
