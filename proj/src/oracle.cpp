#include "alphamix/oracle.hpp"

#include <cmath>
#include <limits>

#include <Eigen/LU>

namespace alphamix::oracle {

std::vector<Index> SignPattern::support() const {
  std::vector<Index> j;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] != 0) j.push_back(static_cast<Index>(i));
  return j;
}

std::vector<Index> SignPattern::inactive() const {
  std::vector<Index> j;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == 0) j.push_back(static_cast<Index>(i));
  return j;
}

OracleResult brute_force_min(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde, const VectorXd* costs) {
  const MatrixXd c = cov.densify();
  const Index n = alpha.size();
  if (c.rows() != n) throw Error(ErrorCode::DimensionMismatch, "alphas and covariance differ in size");
  if (n > kMaxOracleStreams) throw Error(ErrorCode::InvalidInput, "oracle is capped at 12 streams");
  if (costs && costs->size() != n) throw Error(ErrorCode::DimensionMismatch, "per-stream costs differ in size");
  const VectorXd& a = alpha.alphas();
  const double ptol = 1e-9 * std::max(1.0, std::abs(p_tilde));

  OracleResult out;
  double best_r2 = std::numeric_limits<double>::infinity();
  std::size_t best_size = 0;
  VectorXd best_w;
  double best_mu = 0.0, best_mt = 0.0;

  long total = 1;
  for (Index i = 0; i < n; ++i) total *= 3;
  std::vector<int> assign(static_cast<std::size_t>(n));
  for (long code = 0; code < total; ++code) {
    // Stream 0 is the most significant digit; digits 0, 1, 2 map to -1, 0, +1.
    long rest = code;
    for (Index i = n - 1; i >= 0; --i) {
      assign[static_cast<std::size_t>(i)] = static_cast<int>(rest % 3) - 1;
      rest /= 3;
    }
    SignPattern pat{assign};
    const std::vector<Index> j = pat.support();
    if (j.empty()) continue;
    ++out.evaluated;
    const Index m = static_cast<Index>(j.size());
    VectorXd eta(m), ab(m);
    MatrixXd sub(m, m);
    for (Index r = 0; r < m; ++r) {
      eta(r) = assign[static_cast<std::size_t>(j[r])];
      ab(r) = a(j[r]) - (costs ? (*costs)(j[r]) * eta(r) : 0.0);
      for (Index s = 0; s < m; ++s) sub(r, s) = c(j[r], j[s]);
    }

    VectorXd wj;
    double mu = 0.0, mt = 0.0;
    if (m == 1) {
      // One weight, two constraints: feasible only at P~ = eta abar.
      if (std::abs(eta(0) * ab(0) - p_tilde) > ptol) continue;
      wj = eta;
      mu = -sub(0, 0);
    } else {
      // D is the inverse of the restricted covariance, not a restriction of the inverse.
      Eigen::FullPivLU<MatrixXd> lu(sub);
      if (!lu.isInvertible()) {
        ++out.skipped_singular;
        continue;
      }
      const MatrixXd d = lu.inverse();
      const double ct = eta.dot(d * eta), dt = ab.dot(d * eta), et = ab.dot(d * ab);
      const double det = ct * et - dt * dt;
      if (!(det > 1e-14 * ct * et)) {
        ++out.skipped_singular;
        continue;
      }
      mu = (p_tilde * dt - et) / det;
      mt = (dt - p_tilde * ct) / det;
      wj = -mu * (d * eta) - mt * (d * ab);
    }
    bool ok = true;
    for (Index r = 0; r < m && ok; ++r) ok = wj(r) * eta(r) > 0.0;
    if (!ok) continue;
    if (std::abs(wj.lpNorm<1>() - 1.0) > 1e-9 || std::abs(ab.dot(wj) - p_tilde) > ptol) continue;
    ++out.accepted;
    const double r2 = wj.dot(sub * wj);
    const bool first = best_size == 0;
    const bool better = first || r2 < best_r2 - 1e-12 * std::max(1.0, best_r2);
    const bool tie = !better && std::abs(r2 - best_r2) <= 1e-12 * std::max(1.0, best_r2);
    if (better || (tie && j.size() < best_size)) {
      best_r2 = r2;
      best_size = j.size();
      best_w = VectorXd::Zero(n);
      for (Index r = 0; r < m; ++r) best_w(j[r]) = wj(r);
      best_mu = mu;
      best_mt = mt;
      out.pattern = pat;
    }
  }
  if (out.accepted == 0) throw Error(ErrorCode::InfeasibleTarget, "no sign pattern satisfies both constraints");
  out.solution = make_solution(best_w, best_mu, best_mt, alpha, cov, costs);
  out.solution.iterations = static_cast<int>(out.evaluated);
  out.solution.certified_global = evaluate_kkt(out.solution, alpha, cov, costs).certified_global;
  if (out.skipped_singular > 0)
    out.solution.notes.push_back(std::to_string(out.skipped_singular) + " singular pattern(s) skipped");
  return out;
}

KktReport certify(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd* costs) {
  return evaluate_kkt(sol, alpha, cov, costs);
}

}  // namespace alphamix::oracle
