#pragma once

// Minimum volatility at fixed P&L with signed weights, sum |w_i| = 1.
//
// The solver iterates on the support J and signs eta: for a given pattern the
// stationarity conditions and both constraints form a linear system whose size
// is F+2 for a factor model and N(J)+2 for a dense covariance. The solution is
// then reclassified, and the iteration stops when the pattern repeats.

#include <optional>
#include <variant>
#include <vector>

#include "alphamix/core.hpp"

namespace alphamix::factor {

enum class InitialSigns { Alpha, Smax, Custom };

struct SolverState {
  VectorXd v;  // factor exposures (factor model) or off-diagonal covariance terms on J (dense)
  double mu = 0.0;
  double mu_tilde = 0.0;
  std::vector<int> pattern;  // eta_i on J, 0 on J'
  int iteration = 0;
};

struct SolverOptions {
  int max_iterations = 500;
  double boundary_tol = 1e-12;
  double mu_rel_tol = 1e-10;
  InitialSigns initial_signs = InitialSigns::Alpha;
  std::vector<int> custom_signs;  // used with InitialSigns::Custom
  /// On a cycle, a singular pattern or a fixed point with mu < 0, trace the optimum
  /// exactly along P~ from the S_max point instead of failing.
  bool continuation_fallback = true;
  std::vector<SolverState>* trace = nullptr;
};

struct SystemBlocks {
  MatrixXd q;  // F x F
  VectorXd a;
  VectorXd b;
  double c = 0.0, d = 0.0, e = 0.0;
  MatrixXd assembled;  // (F+2) x (F+2)
  VectorXd rhs(double p_tilde) const;
};

struct ReducedScalars {
  double c_t = 0.0;  // eta^T D eta
  double d_t = 0.0;  // alpha^T D eta
  double e_t = 0.0;  // alpha^T D alpha
  double p_star() const { return e_t / d_t; }
  double det() const { return c_t * e_t - d_t * d_t; }
};

struct SmaxResult {
  WeightSolution solution;
  double s_max = 0.0;
  double p_star = 0.0;
  ReducedScalars scalars;
};

struct SharpeMin {
  double value;
};
struct RiskMax {
  double value;
};
using Target = std::variant<SharpeMin, RiskMax>;

struct FrontierPoint {
  double pnl = 0.0;
  double risk = 0.0;
  double sharpe = 0.0;
};

SystemBlocks assemble_blocks(const AlphaSet& alpha, const FactorCovariance& cov, const std::vector<int>& pattern,
                             const VectorXd* costs = nullptr);

/// c~, d~, e~ for a pattern, with alpha replaced by alpha - L eta when costs are given.
ReducedScalars reduced_scalars(const AlphaSet& alpha, const CovarianceModel& cov, const std::vector<int>& pattern,
                               const VectorXd* costs = nullptr);

SmaxResult smax_solution(const AlphaSet& alpha, const CovarianceModel& cov);

WeightSolution solve_fixed_pnl(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                               const SolverOptions& opts = {});
WeightSolution solve_fixed_pnl_dense(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                                     const SolverOptions& opts = {});
/// Dispatches on the covariance variant.
WeightSolution solve_at_pnl(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                            const SolverOptions& opts = {});

WeightSolution target_search(const AlphaSet& alpha, const CovarianceModel& cov, const Target& target,
                             const SolverOptions& opts = {});

KktReport check_optimality(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov);

/// Recomputes (eta, J, J') from weights and multipliers; 0 marks J'.
std::vector<int> classify(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd& w, double mu,
                          double mu_tilde, const VectorXd* costs = nullptr, double boundary_tol = 1e-12);

/// Evenly spaced P~ in [P~*, max|alpha|), solved in order.
std::vector<FrontierPoint> frontier(const AlphaSet& alpha, const CovarianceModel& cov, int points,
                                    const SolverOptions& opts = {});

// Variants with per-stream linear costs L_i; P~ is then net of costs.

/// Maximum-Sharpe point with costs (mu = 0), traced from the cost-free point by
/// continuation in the cost scale.
SmaxResult smax_with_costs(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd& costs);

WeightSolution solve_with_costs(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                                const VectorXd& costs, const SolverOptions& opts = {});

/// Exact path-following solve: starts at the maximum-Sharpe pattern and follows the
/// piecewise-affine optimum in P~ through support changes.
WeightSolution continuation_solve(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                                  const VectorXd* costs = nullptr);

}  // namespace alphamix::factor
