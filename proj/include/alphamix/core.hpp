#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "alphamix/error.hpp"

namespace alphamix {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Weights at or below this magnitude (after L1 normalization) are exact zeros.
inline constexpr double kZeroWeightTol = 1e-12;

// Expected returns, volatilities and turnovers of N alpha streams.
class AlphaSet {
 public:
  AlphaSet(VectorXd alphas, VectorXd vols, std::optional<VectorXd> turnovers = std::nullopt);

  Index size() const { return alphas_.size(); }
  const VectorXd& alphas() const { return alphas_; }
  const VectorXd& vols() const { return vols_; }
  bool has_turnovers() const { return turnovers_.has_value(); }
  /// Throws MissingTurnovers when absent.
  const VectorXd& turnovers() const;

  /// nu_i = 1 / sigma_i
  VectorXd nu() const { return vols_.cwiseInverse(); }
  /// alpha_hat_i = alpha_i / sigma_i, the single-stream Sharpe ratio.
  VectorXd alpha_hat() const { return alphas_.cwiseQuotient(vols_); }

  AlphaSet with_alphas(VectorXd alphas) const;

 private:
  VectorXd alphas_;
  VectorXd vols_;
  std::optional<VectorXd> turnovers_;
};

class DenseCovariance {
 public:
  explicit DenseCovariance(MatrixXd matrix);
  const MatrixXd& matrix() const { return matrix_; }

 private:
  MatrixXd matrix_;
};

// Gamma = Xi + Omega Phi Omega^T, stored with the loaded matrix Omega~ = Omega Phi~
// where Phi~ is the Cholesky factor of Phi.
class FactorCovariance {
 public:
  FactorCovariance(VectorXd specific_var, MatrixXd loadings, MatrixXd factor_cov);

  const VectorXd& specific_var() const { return specific_var_; }
  const MatrixXd& loadings() const { return loadings_; }
  const MatrixXd& factor_cov() const { return factor_cov_; }
  const MatrixXd& loaded() const { return loaded_; }
  Index factors() const { return loaded_.cols(); }

 private:
  VectorXd specific_var_;
  MatrixXd loadings_;
  MatrixXd factor_cov_;
  MatrixXd loaded_;
};

class CovarianceModel {
 public:
  static CovarianceModel dense(MatrixXd matrix);
  static CovarianceModel factor(VectorXd specific_var, MatrixXd loadings, MatrixXd factor_cov);
  /// Factor model with no factors.
  static CovarianceModel diagonal(const VectorXd& variances);

  Index size() const;
  bool is_dense() const { return std::holds_alternative<DenseCovariance>(rep_); }
  bool is_factor() const { return std::holds_alternative<FactorCovariance>(rep_); }
  const DenseCovariance& as_dense() const;
  const FactorCovariance& as_factor() const;

  VectorXd apply(const VectorXd& v) const;
  MatrixXd densify() const;
  VectorXd variances() const;
  /// Covariance of stream i with every stream, i.e. column i.
  VectorXd column(Index i) const;

 private:
  explicit CovarianceModel(std::variant<DenseCovariance, FactorCovariance> rep) : rep_(std::move(rep)) {}
  std::variant<DenseCovariance, FactorCovariance> rep_;
};

struct WeightSolution {
  VectorXd weights;
  std::vector<Index> support;   // J
  std::vector<Index> inactive;  // J'
  std::vector<int> signs;       // eta_i, aligned with support
  double mu = 0.0;
  double mu_tilde = 0.0;
  double pnl = 0.0;
  double risk = 0.0;
  double sharpe = 0.0;
  int iterations = 0;
  bool certified_global = false;
  bool converged = true;
  std::vector<std::string> notes;

  /// Full-length sign vector with zeros on J'.
  VectorXd sign_vector() const;
};

struct PortfolioStats {
  double pnl = 0.0;
  double risk = 0.0;
  double sharpe = 0.0;
  double investment = 1.0;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, WeightSolution best)
      : Error(ErrorCode::NonConvergence, what), best_(std::move(best)) {}
  const WeightSolution& best_iterate() const { return best_; }

 private:
  WeightSolution best_;
};

PortfolioStats portfolio_stats(const VectorXd& weights, const AlphaSet& alpha, const CovarianceModel& cov,
                               double investment = 1.0);
PortfolioStats portfolio_stats(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov,
                               double investment = 1.0);

VectorXd covariance_apply(const CovarianceModel& cov, const VectorXd& v);

WeightSolution validate_weights(const VectorXd& w, double tol = kZeroWeightTol);

/// Normalizes w, attaches the multipliers and fills in P&L (net of the per-stream
/// linear costs, if given), risk and Sharpe.
WeightSolution make_solution(const VectorXd& w, double mu, double mu_tilde, const AlphaSet& alpha,
                             const CovarianceModel& cov, const VectorXd* costs = nullptr);

/// Applies (C|J)^-1 where C|J is the covariance restricted to J. Factor models
/// use the Woodbury form with an F x F inner system.
class RestrictedInverse {
 public:
  RestrictedInverse(const CovarianceModel& cov, std::vector<Index> subset);
  VectorXd solve(const VectorXd& rhs) const;
  const std::vector<Index>& subset() const { return subset_; }

 private:
  std::vector<Index> subset_;
  bool factor_ = false;
  Eigen::LLT<MatrixXd> dense_llt_;
  VectorXd inv_specific_;
  MatrixXd loaded_;
  Eigen::LLT<MatrixXd> inner_llt_;
};

// KKT diagnostics shared by check_optimality and certify.
struct KktReport {
  double stationarity_residual = 0.0;
  double inactive_excess = 0.0;  // max over J' of |mu~ a_j + (Cw)_j| - (mu - mu~ L_j)
  double identity_residual = 0.0;
  double normalization_residual = 0.0;
  double mu_margin = 0.0;  // min_i (mu - mu~ L_i)
  double scale = 1.0;
  bool stationarity_ok = false;
  bool inactive_ok = false;
  bool identity_ok = false;
  bool constraints_ok = false;
  bool signs_ok = false;
  bool certified_global = false;

  bool local_ok() const { return stationarity_ok && inactive_ok && identity_ok && constraints_ok && signs_ok; }
  bool passes() const { return local_ok() && certified_global; }
  std::string summary() const;
};

KktReport evaluate_kkt(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov,
                       const VectorXd* costs = nullptr);

/// Single-stream solution at the top of the P&L range, P~ = max_i(|alpha_i| - L_i).
/// The multipliers are the limiting values at which the next stream is about to enter.
WeightSolution corner_solution(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd* costs = nullptr);

/// Largest attainable P~ = max_i (|alpha_i| - L_i) and its stream.
std::pair<double, Index> max_pnl(const AlphaSet& alpha, const VectorXd* costs = nullptr);

inline int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace alphamix
