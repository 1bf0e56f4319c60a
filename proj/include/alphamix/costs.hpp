#pragma once

// Linear trading costs with turnover reduction from internal crossing, and the
// linearized impact term with capacity search.

#include <optional>
#include <string>
#include <vector>

#include "alphamix/core.hpp"
#include "alphamix/factor.hpp"

namespace alphamix::costs {

struct CostSpec {
  double linear_rate = 0.0;      // L, cost per unit traded
  double impact_coeff = 0.0;     // Q
  double impact_exponent = 2.0;  // n > 1
  double investment = 1.0;       // I
  std::optional<double> rho_star;  // fixed turnover reduction in (0, 1]
  /// Supersedes L rho* tau_i when present.
  std::optional<VectorXd> per_stream;

  void validate() const;
};

struct SpectralInfo {
  double psi1 = 0.0;
  VectorXd v1;
  double rho_star = 1.0;
  bool degenerate = false;  // repeated top eigenvalue
  bool clamped = false;
  std::vector<std::string> notes;
};

struct ImpactLinearization {
  double tau_bar = 0.0;
  VectorXd tau_dev;
  VectorXd eff_costs;  // L~_i = L_i + Q~' tau_bar^(n-1) tau_i
  double q_prime = 0.0;  // Q~' = Q rho*^n I^(n-1)
  double pnl_shift = 0.0;  // (1/n) Q~' tau_bar^n
  double exponent = 2.0;
  double spread_ratio = 0.0;  // std(tau) / tau_bar

  /// Net-of-L~ P&L that corresponds to the actual P&L p. Because L~ charges the
  /// full tau_i (mean included), the constant is pnl_shift - Q~' tau_bar^n.
  double linear_target(double p) const;
  /// Inverse of linear_target.
  double actual_pnl(double linear_pnl) const;
};

struct CapacityResult {
  double i_star = 0.0;
  double pnl_at_star = 0.0;
  WeightSolution solution;
  std::vector<std::string> notes;
};

SpectralInfo rho_star(const MatrixXd& correlation);

/// L_i = L rho* tau_i, or the per-stream override.
VectorXd per_stream_costs(const CostSpec& costs, const AlphaSet& alpha, double rho);

/// Minimum volatility at fixed net P&L with linear costs. When no rho* is fixed and a
/// correlation matrix is given, rho* is recomputed on the converged support until
/// the support used for rho* is reproduced.
WeightSolution linear_cost_solve(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs,
                                 double p_tilde, const MatrixXd* correlation = nullptr,
                                 const factor::SolverOptions& opts = {});

/// Maximum-Sharpe point of the cost-adjusted problem.
factor::SmaxResult linear_cost_smax(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs);

ImpactLinearization impact_effective_costs(const CostSpec& costs, const AlphaSet& alpha);

WeightSolution impact_solve(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs, double p_tilde,
                            const factor::SolverOptions& opts = {});

/// Optimized P&L at investment level I (weights at the cost-adjusted maximum-Sharpe point).
/// Returns nullopt when no stream is profitable at that level.
std::optional<std::pair<double, WeightSolution>> optimized_pnl(const AlphaSet& alpha, const CovarianceModel& cov,
                                                                const CostSpec& costs, double investment);

CapacityResult capacity_search(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs, double i_min,
                               double i_max);

}  // namespace alphamix::costs
