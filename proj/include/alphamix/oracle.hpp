#pragma once

// Ground truth for small problems: every support/sign pattern is solved in
// closed form and the best feasible one is kept.

#include <vector>

#include "alphamix/core.hpp"

namespace alphamix::oracle {

inline constexpr Index kMaxOracleStreams = 12;

struct SignPattern {
  std::vector<int> assignment;  // +1, -1 or 0 per stream

  std::vector<Index> support() const;
  std::vector<Index> inactive() const;
};

struct OracleResult {
  WeightSolution solution;
  SignPattern pattern;
  long evaluated = 0;
  long accepted = 0;
  long skipped_singular = 0;
};

/// Minimum-risk feasible pattern at P~ (net of the per-stream costs, if given).
OracleResult brute_force_min(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                             const VectorXd* costs = nullptr);

/// Stationarity, inactive bound, the R~^2 = -mu - mu~ P~ identity, and the sign of
/// mu - mu~ L_i. local_ok() without certified_global means a local optimum only.
KktReport certify(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov,
                  const VectorXd* costs = nullptr);

}  // namespace alphamix::oracle
