#pragma once

// Eigen-portfolios of a dense covariance: N tradable synthetic streams whose
// covariance is diagonal. Diagnostic transform only.

#include <vector>

#include "alphamix/core.hpp"

namespace alphamix::synthetic {

struct SyntheticBasis {
  MatrixXd portfolio_weights;  // row a: V(a) / sum_j |V(a)_j|
  VectorXd synthetic_alphas;   // non-negative
  VectorXd synthetic_vars;     // lambda(a) / (sum_j |V(a)_j|)^2
  VectorXd eigenvalues;        // descending
  std::vector<bool> degenerate_alpha;  // alpha(a) == 0
};

SyntheticBasis synthetic_portfolios(const AlphaSet& alpha, const CovarianceModel& cov);

}  // namespace alphamix::synthetic
