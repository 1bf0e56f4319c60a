#include "alphamix/costs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace alphamix::costs {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

double resolved_rho(const CostSpec& c) { return c.rho_star.value_or(1.0); }

}  // namespace

void CostSpec::validate() const {
  if (!(linear_rate >= 0.0)) throw Error(ErrorCode::InvalidInput, "linear cost rate must be non-negative");
  if (!(impact_coeff >= 0.0)) throw Error(ErrorCode::InvalidInput, "impact coefficient must be non-negative");
  if (!(impact_exponent > 1.0)) throw Error(ErrorCode::InvalidInput, "impact exponent must exceed 1");
  if (!(investment > 0.0)) throw Error(ErrorCode::InvalidInput, "investment level must be positive");
  if (rho_star && !(*rho_star > 0.0 && *rho_star <= 1.0))
    throw Error(ErrorCode::InvalidInput, "rho* must lie in (0, 1]");
  if (per_stream && (!per_stream->allFinite() || (per_stream->array() < 0.0).any()))
    throw Error(ErrorCode::InvalidInput, "per-stream costs must be non-negative");
}

double ImpactLinearization::linear_target(double p) const { return p + pnl_shift - q_prime * std::pow(tau_bar, exponent); }

double ImpactLinearization::actual_pnl(double linear_pnl) const {
  return linear_pnl - pnl_shift + q_prime * std::pow(tau_bar, exponent);
}

SpectralInfo rho_star(const MatrixXd& psi) {
  const Index n = psi.rows();
  if (n == 0 || psi.cols() != n) throw Error(ErrorCode::NotCorrelation, "correlation matrix must be square");
  if (!psi.allFinite() || (psi - psi.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorCode::NotCorrelation, "correlation matrix is not symmetric");
  if ((psi.diagonal().array() - 1.0).abs().maxCoeff() > 1e-10)
    throw Error(ErrorCode::NotCorrelation, "correlation matrix needs a unit diagonal");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (psi + psi.transpose()));
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();  // ascending
  if (ev(0) < -1e-10 * std::max(1.0, ev(n - 1)))
    throw Error(ErrorCode::NotCorrelation, "correlation matrix is not positive-semidefinite");

  SpectralInfo info;
  info.psi1 = ev(n - 1);
  Index first = n - 1;
  while (first > 0 && ev(first - 1) >= info.psi1 - 1e-10 * std::max(1.0, info.psi1)) --first;
  const MatrixXd basis = es.eigenvectors().rightCols(n - first);
  info.degenerate = basis.cols() > 1;
  // Within the top eigenspace the unit vector maximizing |sum V| is the normalized
  // projection of e; it does not depend on the basis returned by the solver.
  VectorXd proj = basis * (basis.transpose() * VectorXd::Ones(n));
  if (proj.norm() > 1e-12) {
    info.v1 = proj / proj.norm();
  } else {
    info.v1 = basis.col(basis.cols() - 1);
  }
  if (info.v1.sum() < 0.0) info.v1 = -info.v1;
  if (info.degenerate)
    info.notes.push_back("top eigenvalue has multiplicity " + std::to_string(basis.cols()) +
                         "; using the projection of e onto the eigenspace");
  const double nn = static_cast<double>(n);
  double rho = info.psi1 / (nn * std::sqrt(nn)) * std::abs(info.v1.sum());
  if (rho > 1.0) {
    info.notes.push_back("rho* = " + fmt(rho) + " clamped to 1");
    rho = 1.0;
    info.clamped = true;
  } else if (!(rho > 0.0)) {
    info.notes.push_back("rho* = " + fmt(rho) + " clamped to 1e-12");
    rho = 1e-12;
    info.clamped = true;
  }
  info.rho_star = rho;
  return info;
}

VectorXd per_stream_costs(const CostSpec& costs, const AlphaSet& alpha, double rho) {
  if (costs.per_stream) {
    if (costs.per_stream->size() != alpha.size())
      throw Error(ErrorCode::DimensionMismatch, "per-stream costs differ in length");
    return *costs.per_stream;
  }
  if (costs.linear_rate == 0.0) return VectorXd::Zero(alpha.size());
  return costs.linear_rate * rho * alpha.turnovers();
}

factor::SmaxResult linear_cost_smax(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs) {
  costs.validate();
  return factor::smax_with_costs(alpha, cov, per_stream_costs(costs, alpha, resolved_rho(costs)));
}

WeightSolution linear_cost_solve(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs,
                                 double p_tilde, const MatrixXd* correlation, const factor::SolverOptions& opts) {
  costs.validate();
  const bool spectral = !costs.per_stream && !costs.rho_star && correlation && costs.linear_rate > 0.0;
  if (!spectral) {
    const VectorXd l = per_stream_costs(costs, alpha, resolved_rho(costs));
    return factor::solve_with_costs(alpha, cov, p_tilde, l, opts);
  }
  if (correlation->rows() != alpha.size()) throw Error(ErrorCode::DimensionMismatch, "correlation size differs");

  std::vector<Index> used(static_cast<std::size_t>(alpha.size()));
  for (Index i = 0; i < alpha.size(); ++i) used[static_cast<std::size_t>(i)] = i;
  for (int round = 1; round <= 50; ++round) {
    const Index m = static_cast<Index>(used.size());
    MatrixXd sub(m, m);
    for (Index r = 0; r < m; ++r)
      for (Index s = 0; s < m; ++s) sub(r, s) = (*correlation)(used[r], used[s]);
    const SpectralInfo info = rho_star(sub);
    const VectorXd l = per_stream_costs(costs, alpha, info.rho_star);
    WeightSolution sol = factor::solve_with_costs(alpha, cov, p_tilde, l, opts);
    if (sol.support == used) {
      sol.notes.push_back("rho* = " + fmt(info.rho_star) + " on " + std::to_string(m) + " streams after " +
                          std::to_string(round) + " round(s)");
      for (const auto& n : info.notes) sol.notes.push_back(n);
      return sol;
    }
    used = sol.support;
  }
  throw Error(ErrorCode::NonConvergence, "rho* support loop exceeded 50 rounds");
}

ImpactLinearization impact_effective_costs(const CostSpec& costs, const AlphaSet& alpha) {
  costs.validate();
  const VectorXd& tau = alpha.turnovers();
  const double rho = resolved_rho(costs);
  const double n = costs.impact_exponent;
  ImpactLinearization lin;
  lin.exponent = n;
  lin.tau_bar = tau.mean();
  lin.tau_dev = tau.array() - lin.tau_bar;
  lin.q_prime = costs.impact_coeff * std::pow(rho, n) * std::pow(costs.investment, n - 1.0);
  const VectorXd base = per_stream_costs(costs, alpha, rho);
  lin.eff_costs = base + lin.q_prime * std::pow(lin.tau_bar, n - 1.0) * tau;
  lin.pnl_shift = lin.q_prime * std::pow(lin.tau_bar, n) / n;
  lin.spread_ratio = lin.tau_bar > 0.0 ? std::sqrt(lin.tau_dev.squaredNorm() / tau.size()) / lin.tau_bar : 0.0;
  return lin;
}

WeightSolution impact_solve(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs, double p_tilde,
                            const factor::SolverOptions& opts) {
  const ImpactLinearization lin = impact_effective_costs(costs, alpha);
  if ((lin.eff_costs.array() >= alpha.alphas().array().abs()).all())
    throw Error(ErrorCode::CapacityExceeded, "effective costs exceed every |alpha|: the P&L cannot be positive");
  WeightSolution sol = factor::solve_with_costs(alpha, cov, lin.linear_target(p_tilde), lin.eff_costs, opts);
  sol.pnl = lin.actual_pnl(sol.pnl);
  sol.sharpe = sol.pnl / sol.risk;
  sol.notes.push_back("turnover spread/mean = " + fmt(lin.spread_ratio));
  return sol;
}

std::optional<std::pair<double, WeightSolution>> optimized_pnl(const AlphaSet& alpha, const CovarianceModel& cov,
                                                                const CostSpec& costs, double investment) {
  CostSpec at = costs;
  at.investment = investment;
  const ImpactLinearization lin = impact_effective_costs(at, alpha);
  if ((lin.eff_costs.array() >= alpha.alphas().array().abs()).all()) return std::nullopt;
  factor::SmaxResult sm;
  try {
    sm = factor::smax_with_costs(alpha, cov, lin.eff_costs);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InfeasibleTarget) return std::nullopt;
    throw;
  }
  WeightSolution sol = sm.solution;
  sol.pnl = lin.actual_pnl(sol.pnl);
  sol.sharpe = sol.pnl / sol.risk;
  return std::make_pair(investment * sol.pnl, sol);
}

CapacityResult capacity_search(const AlphaSet& alpha, const CovarianceModel& cov, const CostSpec& costs, double i_min,
                               double i_max) {
  costs.validate();
  if (costs.impact_coeff == 0.0) throw Error(ErrorCode::UnboundedCapacity, "no impact term: capacity is unbounded");
  if (!(i_min > 0.0 && i_max > i_min)) throw Error(ErrorCode::InvalidInput, "investment range must be 0 < imin < imax");
  const double ninf = -std::numeric_limits<double>::infinity();
  auto value = [&](double level) {
    const auto r = optimized_pnl(alpha, cov, costs, level);
    return r ? r->first : ninf;
  };
  auto grid = [&](int points, std::vector<double>& xs, std::vector<double>& ys) {
    xs.resize(static_cast<std::size_t>(points));
    ys.resize(static_cast<std::size_t>(points));
    const double ratio = std::log(i_max / i_min);
    for (int k = 0; k < points; ++k) {
      const double x = k + 1 == points ? i_max : i_min * std::exp(ratio * k / (points - 1));
      xs[static_cast<std::size_t>(k)] = x;
      ys[static_cast<std::size_t>(k)] = value(x);
    }
  };

  CapacityResult out;
  std::vector<double> xs, ys;
  grid(32, xs, ys);
  auto argmax = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  std::size_t k = argmax(ys);
  bool unimodal = true;
  for (std::size_t i = 1; i < ys.size(); ++i) {
    const double tol = 1e-12 * std::max(std::abs(ys[i]), std::abs(ys[i - 1]));
    if (i <= k && ys[i] < ys[i - 1] - tol) unimodal = false;
    if (i > k && ys[i] > ys[i - 1] + tol) unimodal = false;
  }
  if (!unimodal) {
    out.notes.push_back("P_opt(I) not unimodal on the 32-point pre-scan; widened to a 1024-point grid");
    grid(1024, xs, ys);
    k = argmax(ys);
  }
  if (!(ys[k] > 0.0)) throw Error(ErrorCode::NoProfitableScale, "optimized P&L is not positive anywhere in range");

  double a = xs[k > 0 ? k - 1 : 0], b = xs[std::min(k + 1, xs.size() - 1)];
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = value(x1), f2 = value(x2);
  for (int it = 0; it < 300 && (b - a) > 1e-10 * std::max(a, 1e-300); ++it) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = value(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = value(x2);
    }
  }
  double best_x = 0.5 * (a + b);
  double best_y = value(best_x);
  if (ys[k] > best_y) {
    best_x = xs[k];
    best_y = ys[k];
  }
  out.i_star = best_x;
  out.pnl_at_star = best_y;
  out.solution = optimized_pnl(alpha, cov, costs, best_x)->second;
  if (k == 0 || k + 1 == xs.size()) out.notes.push_back("maximum at the edge of the investment range");
  return out;
}

}  // namespace alphamix::costs
