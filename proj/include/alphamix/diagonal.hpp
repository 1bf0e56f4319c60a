#pragma once

// Allocation for streams with a diagonal covariance C = diag(sigma^2).
// All routines require non-negative alphas; a negative weight is never optimal
// here, so callers flip the sign of negative alphas first.

#include <vector>

#include "alphamix/core.hpp"

namespace alphamix::diag {

struct GreedyOrder {
  std::vector<Index> permutation;
  VectorXd pnl_path;     // P(K), K = 1..N
  VectorXd sharpe_path;  // S(K) = sqrt(sum_{i<=K} alpha_hat_i^2)
};

struct DiagonalSupportState {
  Index K = 0;
  double a = 0.0;      // sum nu_i alpha_hat_i over the active set
  double b_sq = 0.0;   // sum alpha_hat_i^2
  double nu_sq = 0.0;  // sum nu_i^2
  double mu = 0.0;
  double mu_tilde = 0.0;
  std::vector<Index> order;  // streams by decreasing alpha
};

struct SphereSearchState {
  VectorXd phi;
  double a = 0.0;
  double kappa = 0.0;
  double phi_tilde = 0.0;
  VectorXd chi1;
  double r = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double beta_star = 0.0;
  double beta1_hat = 0.0;
  std::vector<Index> t_plus;
  std::vector<Index> t_minus;
  // Reduced scalars over T+ (zeta, chi, xi) and T- (sigma, phi_minus, lambda).
  double zeta = 0.0, chi = 0.0, xi = 0.0;
  double sigma = 0.0, phi_minus = 0.0, lambda = 0.0;
  double c_minus = 0.0, d_minus = 0.0;
  double lhs = 0.0;
  int iterations = 0;
  bool south_pole = false;
};

GreedyOrder greedy_sort(const AlphaSet& alpha);

/// Greedy relaxation: top streams by the sorting above, the last one scaled by eta in (0,1].
WeightSolution quasi_optimal(const AlphaSet& alpha, double s_star);

/// Minimum volatility at fixed P~; exact optimum of the diagonal problem.
WeightSolution min_vol_fixed_pnl_diag(const AlphaSet& alpha, double p_tilde);
DiagonalSupportState select_support(const AlphaSet& alpha, double p_tilde);

/// Maximum P&L at fixed Sharpe ratio via the sphere construction.
WeightSolution sphere_optimal(const AlphaSet& alpha, double s_star, SphereSearchState* state = nullptr);

/// Maximum P&L at fixed Sharpe ratio by bisection over P~ on min_vol_fixed_pnl_diag.
WeightSolution sharpe_target_diag(const AlphaSet& alpha, double s_star);

/// S_max = sqrt(sum alpha_hat^2) and P~* = b^2/a over the full set.
double diag_smax(const AlphaSet& alpha);
double diag_pstar(const AlphaSet& alpha);

}  // namespace alphamix::diag
