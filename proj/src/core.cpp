#include "alphamix/core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace alphamix {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::SharpeUndefined: return "SharpeUndefined";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NegativeAlpha: return "NegativeAlpha";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::InfeasibleSharpe: return "InfeasibleSharpe";
    case ErrorCode::InfeasibleTarget: return "InfeasibleTarget";
    case ErrorCode::BelowSharpeMaxPnl: return "BelowSharpeMaxPnl";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NotCorrelation: return "NotCorrelation";
    case ErrorCode::MissingTurnovers: return "MissingTurnovers";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::UnboundedCapacity: return "UnboundedCapacity";
    case ErrorCode::NoProfitableScale: return "NoProfitableScale";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegenerateStream: return "DegenerateStream";
  }
  return "Unknown";
}

namespace {

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

MatrixXd checked_symmetric_pd(MatrixXd m, const char* what) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " is not square");
  if (!all_finite(m)) throw Error(ErrorCode::InvalidInput, std::string(what) + " has non-finite entries");
  if (m.size() == 0) return m;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) throw Error(ErrorCode::NotSymmetric, std::string(what) + " is not symmetric");
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || (m.diagonal().array() <= 0.0).any()) {
    throw Error(ErrorCode::NotPositiveDefinite, std::string(what) + " is not positive-definite");
  }
  return m;
}

}  // namespace

AlphaSet::AlphaSet(VectorXd alphas, VectorXd vols, std::optional<VectorXd> turnovers)
    : alphas_(std::move(alphas)), vols_(std::move(vols)), turnovers_(std::move(turnovers)) {
  if (alphas_.size() == 0) throw Error(ErrorCode::EmptyInput, "no alpha streams");
  if (vols_.size() != alphas_.size()) throw Error(ErrorCode::DimensionMismatch, "alphas and vols differ in length");
  if (!alphas_.allFinite() || !vols_.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite alpha or vol");
  if ((vols_.array() <= 0.0).any()) throw Error(ErrorCode::InvalidInput, "volatilities must be positive");
  if (turnovers_) {
    if (turnovers_->size() != alphas_.size())
      throw Error(ErrorCode::DimensionMismatch, "turnovers differ in length");
    if (!turnovers_->allFinite() || (turnovers_->array() < 0.0).any())
      throw Error(ErrorCode::InvalidInput, "turnovers must be non-negative");
  }
}

const VectorXd& AlphaSet::turnovers() const {
  if (!turnovers_) throw Error(ErrorCode::MissingTurnovers, "alpha set has no turnovers");
  return *turnovers_;
}

AlphaSet AlphaSet::with_alphas(VectorXd alphas) const { return AlphaSet(std::move(alphas), vols_, turnovers_); }

DenseCovariance::DenseCovariance(MatrixXd matrix) : matrix_(checked_symmetric_pd(std::move(matrix), "covariance")) {
  if (matrix_.rows() == 0) throw Error(ErrorCode::EmptyInput, "empty covariance");
}

FactorCovariance::FactorCovariance(VectorXd specific_var, MatrixXd loadings, MatrixXd factor_cov)
    : specific_var_(std::move(specific_var)), loadings_(std::move(loadings)) {
  if (specific_var_.size() == 0) throw Error(ErrorCode::EmptyInput, "empty factor model");
  if (loadings_.rows() != specific_var_.size())
    throw Error(ErrorCode::DimensionMismatch, "loadings rows differ from stream count");
  if (factor_cov.rows() != loadings_.cols())
    throw Error(ErrorCode::DimensionMismatch, "factor covariance size differs from factor count");
  if (!specific_var_.allFinite() || (specific_var_.array() <= 0.0).any())
    throw Error(ErrorCode::NotPositiveDefinite, "specific variances must be positive");
  if (!loadings_.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite loadings");
  factor_cov_ = checked_symmetric_pd(std::move(factor_cov), "factor covariance");
  if (loadings_.cols() == 0) {
    loaded_ = MatrixXd(loadings_.rows(), 0);
  } else {
    Eigen::LLT<MatrixXd> llt(factor_cov_);
    loaded_ = loadings_ * MatrixXd(llt.matrixL());
  }
}

CovarianceModel CovarianceModel::dense(MatrixXd matrix) { return CovarianceModel(DenseCovariance(std::move(matrix))); }

CovarianceModel CovarianceModel::factor(VectorXd specific_var, MatrixXd loadings, MatrixXd factor_cov) {
  return CovarianceModel(FactorCovariance(std::move(specific_var), std::move(loadings), std::move(factor_cov)));
}

CovarianceModel CovarianceModel::diagonal(const VectorXd& variances) {
  return factor(variances, MatrixXd(variances.size(), 0), MatrixXd(0, 0));
}

Index CovarianceModel::size() const {
  if (is_dense()) return as_dense().matrix().rows();
  return as_factor().specific_var().size();
}

const DenseCovariance& CovarianceModel::as_dense() const {
  if (!is_dense()) throw Error(ErrorCode::InvalidInput, "dense covariance required");
  return std::get<DenseCovariance>(rep_);
}

const FactorCovariance& CovarianceModel::as_factor() const {
  if (!is_factor()) throw Error(ErrorCode::InvalidInput, "factor covariance required");
  return std::get<FactorCovariance>(rep_);
}

VectorXd CovarianceModel::apply(const VectorXd& v) const {
  if (v.size() != size()) throw Error(ErrorCode::DimensionMismatch, "vector length differs from covariance size");
  if (is_dense()) return as_dense().matrix() * v;
  const auto& f = as_factor();
  VectorXd out = f.specific_var().cwiseProduct(v);
  if (f.factors() > 0) out.noalias() += f.loaded() * (f.loaded().transpose() * v);
  return out;
}

MatrixXd CovarianceModel::densify() const {
  if (is_dense()) return as_dense().matrix();
  const auto& f = as_factor();
  MatrixXd out = f.loaded() * f.loaded().transpose();
  out.diagonal() += f.specific_var();
  return out;
}

VectorXd CovarianceModel::variances() const {
  if (is_dense()) return as_dense().matrix().diagonal();
  const auto& f = as_factor();
  return f.specific_var() + f.loaded().rowwise().squaredNorm();
}

VectorXd CovarianceModel::column(Index i) const {
  if (is_dense()) return as_dense().matrix().col(i);
  const auto& f = as_factor();
  VectorXd out = f.loaded() * f.loaded().row(i).transpose();
  out(i) += f.specific_var()(i);
  return out;
}

VectorXd WeightSolution::sign_vector() const {
  VectorXd s = VectorXd::Zero(weights.size());
  for (std::size_t k = 0; k < support.size(); ++k) s(support[k]) = signs[k];
  return s;
}

VectorXd covariance_apply(const CovarianceModel& cov, const VectorXd& v) { return cov.apply(v); }

PortfolioStats portfolio_stats(const VectorXd& weights, const AlphaSet& alpha, const CovarianceModel& cov,
                               double investment) {
  if (weights.size() != alpha.size() || weights.size() != cov.size())
    throw Error(ErrorCode::DimensionMismatch, "weights, alphas and covariance differ in size");
  if (!(investment > 0.0)) throw Error(ErrorCode::InvalidInput, "investment level must be positive");
  PortfolioStats s;
  s.investment = investment;
  s.pnl = investment * alpha.alphas().dot(weights);
  const double var = weights.dot(cov.apply(weights));
  s.risk = investment * std::sqrt(std::max(0.0, var));
  if (s.risk <= std::numeric_limits<double>::min()) {
    if (s.pnl != 0.0) throw Error(ErrorCode::SharpeUndefined, "zero risk with non-zero P&L");
    s.sharpe = 0.0;
  } else {
    s.sharpe = s.pnl / s.risk;
  }
  return s;
}

PortfolioStats portfolio_stats(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov,
                               double investment) {
  return portfolio_stats(sol.weights, alpha, cov, investment);
}

WeightSolution validate_weights(const VectorXd& w, double tol) {
  if (!w.allFinite()) throw Error(ErrorCode::DegenerateWeights, "non-finite weights");
  double l1 = w.lpNorm<1>();
  if (!(l1 > 0.0)) throw Error(ErrorCode::DegenerateWeights, "all-zero weight vector");
  VectorXd x = w / l1;
  for (Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) <= tol) x(i) = 0.0;
  l1 = x.lpNorm<1>();
  if (!(l1 > 0.0)) throw Error(ErrorCode::DegenerateWeights, "all weights below tolerance");
  x /= l1;

  WeightSolution sol;
  sol.weights = x;
  for (Index i = 0; i < x.size(); ++i) {
    if (x(i) != 0.0) {
      sol.support.push_back(i);
      sol.signs.push_back(sign_of(x(i)));
    } else {
      sol.inactive.push_back(i);
    }
  }
  return sol;
}

WeightSolution make_solution(const VectorXd& w, double mu, double mu_tilde, const AlphaSet& alpha,
                             const CovarianceModel& cov, const VectorXd* costs) {
  WeightSolution sol = validate_weights(w);
  sol.mu = mu;
  sol.mu_tilde = mu_tilde;
  double pnl = alpha.alphas().dot(sol.weights);
  if (costs) pnl -= costs->dot(sol.weights.cwiseAbs());
  sol.pnl = pnl;
  sol.risk = std::sqrt(std::max(0.0, sol.weights.dot(cov.apply(sol.weights))));
  if (sol.risk <= std::numeric_limits<double>::min()) throw Error(ErrorCode::SharpeUndefined, "zero portfolio risk");
  sol.sharpe = sol.pnl / sol.risk;
  return sol;
}

RestrictedInverse::RestrictedInverse(const CovarianceModel& cov, std::vector<Index> subset)
    : subset_(std::move(subset)) {
  const Index n = static_cast<Index>(subset_.size());
  if (cov.is_dense()) {
    const MatrixXd& c = cov.as_dense().matrix();
    MatrixXd sub(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index s = 0; s < n; ++s) sub(r, s) = c(subset_[r], subset_[s]);
    dense_llt_.compute(sub);
    if (dense_llt_.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "restricted covariance");
    return;
  }
  factor_ = true;
  const auto& f = cov.as_factor();
  inv_specific_.resize(n);
  loaded_.resize(n, f.factors());
  for (Index r = 0; r < n; ++r) {
    inv_specific_(r) = 1.0 / f.specific_var()(subset_[r]);
    loaded_.row(r) = f.loaded().row(subset_[r]);
  }
  MatrixXd inner = MatrixXd::Identity(f.factors(), f.factors());
  inner.noalias() += loaded_.transpose() * inv_specific_.asDiagonal() * loaded_;
  inner_llt_.compute(inner);
}

VectorXd RestrictedInverse::solve(const VectorXd& rhs) const {
  if (!factor_) return dense_llt_.solve(rhs);
  VectorXd x = inv_specific_.cwiseProduct(rhs);
  if (loaded_.cols() == 0) return x;
  VectorXd t = inner_llt_.solve(loaded_.transpose() * x);
  x.noalias() -= inv_specific_.cwiseProduct(loaded_ * t);
  return x;
}

std::string KktReport::summary() const {
  std::ostringstream os;
  os << "stationarity=" << stationarity_residual << (stationarity_ok ? " ok" : " FAIL")
     << " inactive_excess=" << inactive_excess << (inactive_ok ? " ok" : " FAIL")
     << " identity=" << identity_residual << (identity_ok ? " ok" : " FAIL")
     << " normalization=" << normalization_residual << (constraints_ok ? " ok" : " FAIL")
     << " signs=" << (signs_ok ? "ok" : "FAIL") << " mu_margin=" << mu_margin
     << (certified_global ? " global" : " local only");
  return os.str();
}

KktReport evaluate_kkt(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov,
                       const VectorXd* costs) {
  const Index n = alpha.size();
  if (sol.weights.size() != n || cov.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "solution, alphas and covariance differ in size");
  const VectorXd& a = alpha.alphas();
  const VectorXd l = costs ? *costs : VectorXd::Zero(n);
  const VectorXd& w = sol.weights;
  const VectorXd cw = cov.apply(w);

  KktReport rep;
  rep.scale = std::max({1.0, cw.cwiseAbs().maxCoeff(), std::abs(sol.mu),
                        std::abs(sol.mu_tilde) * (a.cwiseAbs() + l).maxCoeff()});

  rep.signs_ok = sol.support.size() == sol.signs.size();
  for (std::size_t k = 0; k < sol.support.size() && rep.signs_ok; ++k) {
    const Index i = sol.support[k];
    if (sign_of(w(i)) != sol.signs[k]) rep.signs_ok = false;
  }
  for (Index j : sol.inactive)
    if (w(j) != 0.0) rep.signs_ok = false;

  for (std::size_t k = 0; k < sol.support.size(); ++k) {
    const Index i = sol.support[k];
    const double eta = sol.signs[k];
    const double r = cw(i) + sol.mu * eta + sol.mu_tilde * (a(i) - l(i) * eta);
    rep.stationarity_residual = std::max(rep.stationarity_residual, std::abs(r));
  }
  rep.inactive_excess = -std::numeric_limits<double>::infinity();
  for (Index j : sol.inactive) {
    const double z = std::abs(sol.mu_tilde * a(j) + cw(j)) - (sol.mu - sol.mu_tilde * l(j));
    rep.inactive_excess = std::max(rep.inactive_excess, z);
  }
  if (sol.inactive.empty()) rep.inactive_excess = 0.0;

  const double pnl = a.dot(w) - l.dot(w.cwiseAbs());
  const double r2 = w.dot(cw);
  rep.identity_residual = std::abs(r2 + sol.mu + sol.mu_tilde * pnl);
  rep.normalization_residual = std::abs(w.lpNorm<1>() - 1.0);

  rep.mu_margin = (sol.mu - sol.mu_tilde * l.array()).minCoeff();

  rep.stationarity_ok = rep.stationarity_residual <= 1e-8 * rep.scale;
  rep.inactive_ok = rep.inactive_excess <= 1e-10 * rep.scale;
  rep.identity_ok = rep.identity_residual <= 1e-9 * rep.scale;
  rep.constraints_ok = rep.normalization_residual <= 1e-10 &&
                       std::abs(pnl - sol.pnl) <= 1e-9 * std::max(1.0, std::abs(pnl));
  rep.certified_global = rep.mu_margin >= -1e-12 * rep.scale;
  return rep;
}

std::pair<double, Index> max_pnl(const AlphaSet& alpha, const VectorXd* costs) {
  const VectorXd& a = alpha.alphas();
  Index best = 0;
  double top = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < a.size(); ++i) {
    const double p = std::abs(a(i)) - (costs ? (*costs)(i) : 0.0);
    if (p > top) {
      top = p;
      best = i;
    }
  }
  return {top, best};
}

WeightSolution corner_solution(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd* costs) {
  const Index n = alpha.size();
  const auto [pk, k] = max_pnl(alpha, costs);
  if (!(pk > 0.0)) throw Error(ErrorCode::InfeasibleTarget, "no stream has positive net alpha");
  const VectorXd& a = alpha.alphas();
  const double s = a(k) >= 0.0 ? 1.0 : -1.0;
  const VectorXd col = cov.column(k);
  const double ckk = col(k);

  // Stationarity on J={k} fixes mu = -C_kk - mu~ p_k; each inactive stream bounds mu~ from above.
  double mt = -ckk / pk;
  for (Index j = 0; j < n; ++j) {
    if (j == k) continue;
    const double lj = costs ? (*costs)(j) : 0.0;
    const double c1 = a(j) + pk + lj;
    const double c2 = pk + lj - a(j);
    if (c1 > 0.0) mt = std::min(mt, (-ckk - col(j) * s) / c1);
    if (c2 > 0.0) mt = std::min(mt, (-ckk + col(j) * s) / c2);
  }
  VectorXd w = VectorXd::Zero(n);
  w(k) = s;
  WeightSolution sol = make_solution(w, -ckk - mt * pk, mt, alpha, cov, costs);
  sol.certified_global = evaluate_kkt(sol, alpha, cov, costs).certified_global;
  sol.notes.push_back("single-stream corner at the top of the P&L range");
  return sol;
}

}  // namespace alphamix
