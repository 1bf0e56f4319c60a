#include "alphamix/factor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include <Eigen/LU>

namespace alphamix::factor {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VectorXd effective_alpha(const AlphaSet& alpha, const std::vector<int>& pattern, const VectorXd* costs) {
  VectorXd abar = alpha.alphas();
  if (costs)
    for (Index i = 0; i < abar.size(); ++i) abar(i) -= (*costs)(i) * pattern[static_cast<std::size_t>(i)];
  return abar;
}

std::vector<Index> support_of(const std::vector<int>& pattern) {
  std::vector<Index> j;
  for (std::size_t i = 0; i < pattern.size(); ++i)
    if (pattern[i] != 0) j.push_back(static_cast<Index>(i));
  return j;
}

struct PatternResult {
  bool ok = false;
  VectorXd w;  // full length, zero on J'
  double mu = 0.0;
  double mu_tilde = 0.0;
  VectorXd v;
};

PatternResult solve_pattern_factor(const AlphaSet& alpha, const FactorCovariance& f, const std::vector<int>& pattern,
                                   const VectorXd* costs, double p_tilde) {
  PatternResult out;
  const SystemBlocks blocks = assemble_blocks(alpha, f, pattern, costs);
  Eigen::PartialPivLU<MatrixXd> lu(blocks.assembled);
  if (!(lu.rcond() > 1e-15)) return out;
  const VectorXd x = lu.solve(blocks.rhs(p_tilde));
  if (!x.allFinite()) return out;
  const Index nf = f.factors();
  out.v = x.head(nf);
  out.mu = x(nf);
  out.mu_tilde = x(nf + 1);
  const VectorXd abar = effective_alpha(alpha, pattern, costs);
  out.w = VectorXd::Zero(alpha.size());
  for (Index i = 0; i < alpha.size(); ++i) {
    const int eta = pattern[static_cast<std::size_t>(i)];
    if (eta == 0) continue;
    const double load = nf > 0 ? f.loaded().row(i).dot(out.v) : 0.0;
    out.w(i) = -(out.mu * eta + out.mu_tilde * abar(i) + load) / f.specific_var()(i);
  }
  out.ok = true;
  return out;
}

PatternResult solve_pattern_dense(const AlphaSet& alpha, const MatrixXd& c, const std::vector<int>& pattern,
                                  const VectorXd* costs, double p_tilde) {
  PatternResult out;
  const std::vector<Index> j = support_of(pattern);
  const Index m = static_cast<Index>(j.size());
  if (m == 0) return out;
  const VectorXd abar = effective_alpha(alpha, pattern, costs);
  MatrixXd sys = MatrixXd::Zero(m + 2, m + 2);
  VectorXd eta(m), ab(m), diag(m);
  for (Index r = 0; r < m; ++r) {
    eta(r) = pattern[static_cast<std::size_t>(j[r])];
    ab(r) = abar(j[r]);
    diag(r) = c(j[r], j[r]);
  }
  for (Index r = 0; r < m; ++r)
    for (Index s = 0; s < m; ++s) sys(r, s) = c(j[r], j[s]) / diag(s);
  const MatrixXd q = sys.topLeftCorner(m, m);
  sys.block(0, m, m, 1) = q * eta - eta;
  sys.block(0, m + 1, m, 1) = q * ab - ab;
  sys.block(m, 0, 1, m) = eta.cwiseQuotient(diag).transpose();
  sys.block(m + 1, 0, 1, m) = ab.cwiseQuotient(diag).transpose();
  sys(m, m) = diag.cwiseInverse().sum();
  sys(m, m + 1) = sys(m + 1, m) = ab.cwiseProduct(eta).cwiseQuotient(diag).sum();
  sys(m + 1, m + 1) = ab.cwiseAbs2().cwiseQuotient(diag).sum();
  VectorXd rhs = VectorXd::Zero(m + 2);
  rhs(m) = -1.0;
  rhs(m + 1) = -p_tilde;
  Eigen::PartialPivLU<MatrixXd> lu(sys);
  if (!(lu.rcond() > 1e-15)) return out;
  const VectorXd x = lu.solve(rhs);
  if (!x.allFinite()) return out;
  out.v = x.head(m);
  out.mu = x(m);
  out.mu_tilde = x(m + 1);
  out.w = VectorXd::Zero(alpha.size());
  for (Index r = 0; r < m; ++r)
    out.w(j[r]) = -(out.mu * eta(r) + out.mu_tilde * ab(r) + out.v(r)) / diag(r);
  out.ok = true;
  return out;
}

void check_target(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde, const VectorXd* costs,
                  double p_star) {
  if (alpha.size() != cov.size()) throw Error(ErrorCode::DimensionMismatch, "alphas and covariance differ in size");
  if (costs && costs->size() != alpha.size())
    throw Error(ErrorCode::DimensionMismatch, "per-stream costs differ in size");
  if (!std::isfinite(p_tilde)) throw Error(ErrorCode::InvalidTarget, "non-finite P&L target");
  const double p_max = max_pnl(alpha, costs).first;
  if (p_tilde >= p_max) throw Error(ErrorCode::InfeasibleTarget, "P&L target at or above max |alpha|");
  if (p_tilde < p_star - 1e-12 * std::max(1.0, std::abs(p_star)))
    throw Error(ErrorCode::BelowSharpeMaxPnl, "P&L target below the maximum-Sharpe P&L");
}

std::vector<int> initial_pattern(const AlphaSet& alpha, const CovarianceModel& cov, const SolverOptions& opts) {
  const Index n = alpha.size();
  std::vector<int> p(static_cast<std::size_t>(n));
  switch (opts.initial_signs) {
    case InitialSigns::Alpha:
      for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = alpha.alphas()(i) < 0.0 ? -1 : 1;
      break;
    case InitialSigns::Smax: {
      const VectorXd u = RestrictedInverse(cov, support_of(std::vector<int>(static_cast<std::size_t>(n), 1)))
                             .solve(alpha.alphas());
      for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = u(i) < 0.0 ? -1 : 1;
      break;
    }
    case InitialSigns::Custom:
      if (opts.custom_signs.size() != static_cast<std::size_t>(n))
        throw Error(ErrorCode::DimensionMismatch, "custom initial signs differ in length");
      p = opts.custom_signs;
      for (int& s : p) s = sign_of(s);
      if (support_of(p).empty()) throw Error(ErrorCode::InvalidInput, "custom initial signs are all zero");
      break;
  }
  return p;
}

using PatternSolver = std::function<PatternResult(const std::vector<int>&)>;

struct IterationOutcome {
  bool converged = false;
  bool singular = false;
  bool cycled = false;
  int iterations = 0;
  PatternResult result;
  PatternResult best;
  double best_risk = kInf;
};

IterationOutcome iterate(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd* costs,
                         const SolverOptions& opts, const PatternSolver& solve) {
  IterationOutcome out;
  std::vector<int> pattern = initial_pattern(alpha, cov, opts);
  std::set<std::vector<int>> seen;
  seen.insert(pattern);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    out.iterations = it;
    PatternResult r = solve(pattern);
    if (!r.ok) {
      out.singular = true;
      return out;
    }
    const double risk = std::sqrt(std::max(0.0, r.w.dot(cov.apply(r.w))));
    if (risk < out.best_risk) {
      out.best_risk = risk;
      out.best = r;
    }
    std::vector<int> next = classify(alpha, cov, r.w, r.mu, r.mu_tilde, costs, opts.boundary_tol);
    if (opts.trace) opts.trace->push_back(SolverState{r.v, r.mu, r.mu_tilde, pattern, it});
    // A repeated pattern reproduces the same (v, mu, mu~) on the next solve, so the
    // continuous convergence criteria hold automatically.
    if (next == pattern) {
      out.converged = true;
      out.result = std::move(r);
      return out;
    }
    if (support_of(next).empty()) {
      out.singular = true;
      return out;
    }
    if (!seen.insert(next).second) {
      out.cycled = true;
      return out;
    }
    pattern = std::move(next);
  }
  return out;
}

WeightSolution finish(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd* costs,
                      const PatternResult& r, int iterations) {
  WeightSolution sol = make_solution(r.w, r.mu, r.mu_tilde, alpha, cov, costs);
  sol.iterations = iterations;
  sol.certified_global = evaluate_kkt(sol, alpha, cov, costs).certified_global;
  return sol;
}

WeightSolution run_solver(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde, const VectorXd* costs,
                          const SolverOptions& opts, const PatternSolver& solve, double p_star) {
  check_target(alpha, cov, p_tilde, costs, p_star);
  p_tilde = std::max(p_tilde, p_star);
  IterationOutcome out = iterate(alpha, cov, costs, opts, solve);

  std::string reason;
  if (out.converged) {
    WeightSolution sol = finish(alpha, cov, costs, out.result, out.iterations);
    if (sol.certified_global || !opts.continuation_fallback) return sol;
    reason = "fixed point with mu < mu~ L_i";
  } else if (out.cycled) {
    reason = "support/sign cycle after " + std::to_string(out.iterations) + " iterations";
  } else if (out.singular) {
    reason = "singular pattern system at iteration " + std::to_string(out.iterations);
  } else {
    reason = "iteration cap of " + std::to_string(opts.max_iterations) + " reached";
  }

  if (!opts.continuation_fallback) {
    if (out.singular && !out.best.ok) throw Error(ErrorCode::SingularSystem, reason);
    WeightSolution best;
    if (out.best.ok) {
      best = make_solution(out.best.w, out.best.mu, out.best.mu_tilde, alpha, cov, costs);
      best.iterations = out.iterations;
    }
    best.converged = false;
    best.notes.push_back("minimum-risk iterate; " + reason);
    throw NonConvergenceError(reason, best);
  }

  WeightSolution sol = continuation_solve(alpha, cov, p_tilde, costs);
  sol.iterations += out.iterations;
  sol.notes.insert(sol.notes.begin(), "iteration fallback to P&L continuation: " + reason);
  return sol;
}

// --- exact continuation -------------------------------------------------------

// Optimum for a fixed pattern, affine in the continuation parameter t:
// weights w0 + t w1 (full length) and their covariance images.
struct AffinePattern {
  std::vector<Index> j;
  VectorXd w0, w1, cw0, cw1;
  double m0 = 0.0, m1 = 0.0;    // mu(t) = m0 + t m1
  double mt0 = 0.0, mt1 = 0.0;  // mu~(t)
};

// Fixed-P~ problem: w_J = -mu D eta - mu~ D abar, with both constraints imposed.
AffinePattern pnl_affine(const AlphaSet& alpha, const CovarianceModel& cov, const std::vector<int>& pattern,
                         const VectorXd* costs) {
  AffinePattern ap;
  ap.j = support_of(pattern);
  const Index m = static_cast<Index>(ap.j.size());
  const VectorXd abar_full = effective_alpha(alpha, pattern, costs);
  VectorXd eta(m), ab(m);
  for (Index r = 0; r < m; ++r) {
    eta(r) = pattern[static_cast<std::size_t>(ap.j[r])];
    ab(r) = abar_full(ap.j[r]);
  }
  const RestrictedInverse d(cov, ap.j);
  const VectorXd u = d.solve(eta), t = d.solve(ab);
  const double c = eta.dot(u), dd = ab.dot(u), e = ab.dot(t);
  const double det = c * e - dd * dd;
  if (!(det > 1e-14 * c * e)) throw Error(ErrorCode::SingularSystem, "degenerate pattern on the continuation path");
  ap.m0 = -e / det;
  ap.m1 = dd / det;
  ap.mt0 = dd / det;
  ap.mt1 = -c / det;
  const VectorXd w0j = (e * u - dd * t) / det, w1j = (c * t - dd * u) / det;
  ap.w0 = VectorXd::Zero(alpha.size());
  ap.w1 = VectorXd::Zero(alpha.size());
  for (Index r = 0; r < m; ++r) {
    ap.w0(ap.j[r]) = w0j(r);
    ap.w1(ap.j[r]) = w1j(r);
  }
  ap.cw0 = cov.apply(ap.w0);
  ap.cw1 = cov.apply(ap.w1);
  return ap;
}

struct Event {
  double t = kInf;
  Index index = -1;
  int new_sign = 0;
};

// Next support change for t > t_cur. Inactive streams stay inside
// |mu~ x_j + (Cw)_j| <= mu - mu~ L_j, where x is alpha for the P~ path; active weights keep their sign.
Event next_event(const AffinePattern& ap, const std::vector<int>& pattern, const VectorXd& x, const VectorXd& l,
                 double t_cur, Index last) {
  Event ev;
  const double slack = 1e-12 * std::max(1.0, std::abs(t_cur));
  auto consider = [&](double f0, double f1, Index i, int s) {
    if (!(f1 < 0.0)) return;
    const double t = -f0 / f1;
    if (t < t_cur - slack || (i == last && t <= t_cur + slack)) return;
    if (t < ev.t) ev = Event{std::max(t, t_cur), i, s};
  };
  for (Index i = 0; i < static_cast<Index>(pattern.size()); ++i) {
    const int eta = pattern[static_cast<std::size_t>(i)];
    if (eta != 0) {
      // eta w(t) >= 0
      consider(eta * ap.w0(i), eta * ap.w1(i), i, 0);
      continue;
    }
    const double z0 = ap.mt0 * x(i) + ap.cw0(i), z1 = ap.mt1 * x(i) + ap.cw1(i);
    const double h0 = ap.m0 - ap.mt0 * l(i), h1 = ap.m1 - ap.mt1 * l(i);
    consider(h0 - z0, h1 - z1, i, -1);  // z reaches +h: enters with eta = -1
    consider(h0 + z0, h1 + z1, i, +1);  // z reaches -h: enters with eta = +1
  }
  return ev;
}

// Maximum-Sharpe point with costs by continuation in the cost scale s in [0, 1].
// For fixed (J, eta) the unnormalized weights are u = (C|J)^-1 (alpha - s L eta).
struct LassoAffine {
  std::vector<Index> j;
  VectorXd u0, u1, cu0, cu1;
};

LassoAffine lasso_affine(const AlphaSet& alpha, const CovarianceModel& cov, const std::vector<int>& pattern,
                         const VectorXd& l) {
  LassoAffine la;
  la.j = support_of(pattern);
  const Index m = static_cast<Index>(la.j.size());
  VectorXd a(m), le(m);
  for (Index r = 0; r < m; ++r) {
    a(r) = alpha.alphas()(la.j[r]);
    le(r) = l(la.j[r]) * pattern[static_cast<std::size_t>(la.j[r])];
  }
  const RestrictedInverse d(cov, la.j);
  const VectorXd g0 = d.solve(a), g1 = -d.solve(le);
  la.u0 = VectorXd::Zero(alpha.size());
  la.u1 = VectorXd::Zero(alpha.size());
  for (Index r = 0; r < m; ++r) {
    la.u0(la.j[r]) = g0(r);
    la.u1(la.j[r]) = g1(r);
  }
  la.cu0 = cov.apply(la.u0);
  la.cu1 = cov.apply(la.u1);
  return la;
}

std::vector<int> smax_pattern(const AlphaSet& alpha, const CovarianceModel& cov, VectorXd* u_out) {
  const Index n = alpha.size();
  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  const VectorXd u = RestrictedInverse(cov, all).solve(alpha.alphas());
  const double l1 = u.lpNorm<1>();
  if (!(l1 > 0.0)) throw Error(ErrorCode::DegenerateInput, "all alphas are zero");
  std::vector<int> p(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = std::abs(u(i)) <= kZeroWeightTol * l1 ? 0 : sign_of(u(i));
  if (u_out) *u_out = u;
  return p;
}

}  // namespace

VectorXd SystemBlocks::rhs(double p_tilde) const {
  const Index nf = q.rows();
  VectorXd y = VectorXd::Zero(nf + 2);
  y(nf) = -1.0;
  y(nf + 1) = -p_tilde;
  return y;
}

SystemBlocks assemble_blocks(const AlphaSet& alpha, const FactorCovariance& cov, const std::vector<int>& pattern,
                             const VectorXd* costs) {
  const Index n = alpha.size(), nf = cov.factors();
  if (static_cast<Index>(pattern.size()) != n || cov.specific_var().size() != n)
    throw Error(ErrorCode::DimensionMismatch, "pattern, alphas and covariance differ in size");
  const VectorXd abar = effective_alpha(alpha, pattern, costs);
  SystemBlocks b;
  b.q = MatrixXd::Identity(nf, nf);
  b.a = VectorXd::Zero(nf);
  b.b = VectorXd::Zero(nf);
  for (Index i = 0; i < n; ++i) {
    const int eta = pattern[static_cast<std::size_t>(i)];
    if (eta == 0) continue;
    const double inv = 1.0 / cov.specific_var()(i);
    if (nf > 0) {
      const auto row = cov.loaded().row(i);
      b.q.noalias() += inv * row.transpose() * row;
      b.a += (eta * inv) * row.transpose();
      b.b += (abar(i) * inv) * row.transpose();
    }
    b.c += inv;
    b.d += abar(i) * eta * inv;
    b.e += abar(i) * abar(i) * inv;
  }
  b.assembled = MatrixXd::Zero(nf + 2, nf + 2);
  b.assembled.topLeftCorner(nf, nf) = b.q;
  b.assembled.block(0, nf, nf, 1) = b.a;
  b.assembled.block(0, nf + 1, nf, 1) = b.b;
  b.assembled.block(nf, 0, 1, nf) = b.a.transpose();
  b.assembled.block(nf + 1, 0, 1, nf) = b.b.transpose();
  b.assembled(nf, nf) = b.c;
  b.assembled(nf, nf + 1) = b.assembled(nf + 1, nf) = b.d;
  b.assembled(nf + 1, nf + 1) = b.e;
  return b;
}

ReducedScalars reduced_scalars(const AlphaSet& alpha, const CovarianceModel& cov, const std::vector<int>& pattern,
                               const VectorXd* costs) {
  const std::vector<Index> j = support_of(pattern);
  if (j.empty()) throw Error(ErrorCode::EmptyInput, "empty support");
  const VectorXd abar_full = effective_alpha(alpha, pattern, costs);
  const Index m = static_cast<Index>(j.size());
  VectorXd eta(m), ab(m);
  for (Index r = 0; r < m; ++r) {
    eta(r) = pattern[static_cast<std::size_t>(j[r])];
    ab(r) = abar_full(j[r]);
  }
  const RestrictedInverse d(cov, j);
  const VectorXd u = d.solve(eta);
  ReducedScalars s;
  s.c_t = eta.dot(u);
  s.d_t = ab.dot(u);
  s.e_t = ab.dot(d.solve(ab));
  return s;
}

SmaxResult smax_solution(const AlphaSet& alpha, const CovarianceModel& cov) {
  if (alpha.size() != cov.size()) throw Error(ErrorCode::DimensionMismatch, "alphas and covariance differ in size");
  VectorXd u;
  const std::vector<int> pattern = smax_pattern(alpha, cov, &u);
  SmaxResult out;
  out.scalars = reduced_scalars(alpha, cov, pattern);
  out.s_max = std::sqrt(alpha.alphas().dot(u));
  out.p_star = out.scalars.p_star();
  out.solution = make_solution(u, 0.0, -1.0 / out.scalars.d_t, alpha, cov);
  out.solution.certified_global = true;
  return out;
}

SmaxResult smax_with_costs(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd& costs) {
  if (costs.size() != alpha.size()) throw Error(ErrorCode::DimensionMismatch, "per-stream costs differ in size");
  if ((costs.array() < 0.0).any()) throw Error(ErrorCode::InvalidInput, "negative per-stream costs");
  if (costs.isZero(0.0)) return smax_solution(alpha, cov);
  const Index n = alpha.size();
  const VectorXd& a = alpha.alphas();
  std::vector<int> pattern = smax_pattern(alpha, cov, nullptr);
  double s = 0.0;
  Index last = -1;
  int events = 0;
  const int max_events = 20 * static_cast<int>(n) + 100;
  LassoAffine la;
  for (;;) {
    if (support_of(pattern).empty())
      throw Error(ErrorCode::InfeasibleTarget, "linear costs remove every stream at the maximum-Sharpe point");
    la = lasso_affine(alpha, cov, pattern, costs);
    Event ev;
    const double slack = 1e-12;
    auto consider = [&](double f0, double f1, Index i, int sg) {
      if (!(f1 < 0.0)) return;
      const double t = -f0 / f1;
      if (t < s - slack || (i == last && t <= s + slack)) return;
      if (t < ev.t) ev = Event{std::max(t, s), i, sg};
    };
    for (Index i = 0; i < n; ++i) {
      const int eta = pattern[static_cast<std::size_t>(i)];
      if (eta != 0) {
        consider(eta * la.u0(i), eta * la.u1(i), i, 0);
        continue;
      }
      // residual r = alpha - C u must stay within [-s L, s L]
      const double r0 = a(i) - la.cu0(i), r1 = -la.cu1(i);
      consider(-r0, costs(i) - r1, i, +1);
      consider(r0, costs(i) + r1, i, -1);
    }
    if (ev.t >= 1.0) break;
    if (++events > max_events) throw Error(ErrorCode::NumericalFailure, "cost-scale continuation did not terminate");
    s = ev.t;
    last = ev.index;
    pattern[static_cast<std::size_t>(ev.index)] = ev.new_sign;
  }
  const VectorXd u = la.u0 + la.u1;
  std::vector<int> final_pattern = pattern;
  SmaxResult out;
  out.scalars = reduced_scalars(alpha, cov, final_pattern, &costs);
  const double l1 = u.lpNorm<1>();
  out.solution = make_solution(u, 0.0, -1.0 / l1, alpha, cov, &costs);
  out.solution.certified_global = true;
  out.solution.iterations = events;
  out.p_star = out.solution.pnl;
  out.s_max = out.solution.sharpe;
  if (!(out.p_star > 0.0))
    throw Error(ErrorCode::InfeasibleTarget, "no positive net P&L at the maximum-Sharpe point");
  return out;
}

std::vector<int> classify(const AlphaSet& alpha, const CovarianceModel& cov, const VectorXd& w, double mu,
                          double mu_tilde, const VectorXd* costs, double boundary_tol) {
  // z_i = mu~ alpha_i + (Omega~ v)_i for a factor model, mu~ alpha_i + sum_{j != i} C_ij w_j for a dense one.
  const VectorXd cw = cov.apply(w);
  const VectorXd var = cov.is_factor() ? cov.as_factor().specific_var() : cov.variances();
  const Index n = alpha.size();
  std::vector<int> p(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    const double z = mu_tilde * alpha.alphas()(i) + cw(i) - var(i) * w(i);
    const double h = mu - mu_tilde * (costs ? (*costs)(i) : 0.0);
    if (std::abs(z) > h + boundary_tol * std::max(1.0, std::abs(h))) p[static_cast<std::size_t>(i)] = z > 0.0 ? -1 : 1;
  }
  return p;
}

WeightSolution continuation_solve(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                                  const VectorXd* costs) {
  const Index n = alpha.size();
  const VectorXd l = costs ? *costs : VectorXd::Zero(n);
  const SmaxResult start = costs ? smax_with_costs(alpha, cov, *costs) : smax_solution(alpha, cov);
  check_target(alpha, cov, p_tilde, costs, start.p_star);
  std::vector<int> pattern(static_cast<std::size_t>(n), 0);
  for (std::size_t k = 0; k < start.solution.support.size(); ++k)
    pattern[static_cast<std::size_t>(start.solution.support[k])] = start.solution.signs[k];

  double t = start.p_star;
  Index last = -1;
  int events = 0;
  const int max_events = 20 * static_cast<int>(n) + 100;
  AffinePattern ap;
  for (;;) {
    ap = pnl_affine(alpha, cov, pattern, costs);
    const Event ev = next_event(ap, pattern, alpha.alphas(), l, t, last);
    if (ev.t >= p_tilde) break;
    if (++events > max_events) throw Error(ErrorCode::NumericalFailure, "P&L continuation did not terminate");
    t = ev.t;
    last = ev.index;
    pattern[static_cast<std::size_t>(ev.index)] = ev.new_sign;
    if (support_of(pattern).empty()) throw Error(ErrorCode::NumericalFailure, "continuation emptied the support");
  }
  const double p = std::max(p_tilde, start.p_star);
  const VectorXd w = ap.w0 + p * ap.w1;
  WeightSolution sol = make_solution(w, ap.m0 + p * ap.m1, ap.mt0 + p * ap.mt1, alpha, cov, costs);
  sol.iterations = events;
  sol.certified_global = evaluate_kkt(sol, alpha, cov, costs).certified_global;
  sol.notes.push_back("continuation: " + std::to_string(events) + " support changes");
  return sol;
}

WeightSolution solve_fixed_pnl(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                               const SolverOptions& opts) {
  const FactorCovariance& f = cov.as_factor();
  const double p_star = smax_solution(alpha, cov).p_star;
  return run_solver(
      alpha, cov, p_tilde, nullptr, opts,
      [&](const std::vector<int>& pat) { return solve_pattern_factor(alpha, f, pat, nullptr, std::max(p_tilde, p_star)); },
      p_star);
}

WeightSolution solve_fixed_pnl_dense(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                                     const SolverOptions& opts) {
  const MatrixXd& c = cov.as_dense().matrix();
  const double p_star = smax_solution(alpha, cov).p_star;
  return run_solver(
      alpha, cov, p_tilde, nullptr, opts,
      [&](const std::vector<int>& pat) { return solve_pattern_dense(alpha, c, pat, nullptr, std::max(p_tilde, p_star)); },
      p_star);
}

WeightSolution solve_at_pnl(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                            const SolverOptions& opts) {
  return cov.is_factor() ? solve_fixed_pnl(alpha, cov, p_tilde, opts) : solve_fixed_pnl_dense(alpha, cov, p_tilde, opts);
}

WeightSolution solve_with_costs(const AlphaSet& alpha, const CovarianceModel& cov, double p_tilde,
                                const VectorXd& costs, const SolverOptions& opts) {
  const double p_star = smax_with_costs(alpha, cov, costs).p_star;
  const double p = std::max(p_tilde, p_star);
  PatternSolver solve;
  if (cov.is_factor()) {
    solve = [&](const std::vector<int>& pat) { return solve_pattern_factor(alpha, cov.as_factor(), pat, &costs, p); };
  } else {
    solve = [&](const std::vector<int>& pat) { return solve_pattern_dense(alpha, cov.as_dense().matrix(), pat, &costs, p); };
  }
  return run_solver(alpha, cov, p_tilde, &costs, opts, solve, p_star);
}

KktReport check_optimality(const WeightSolution& sol, const AlphaSet& alpha, const CovarianceModel& cov) {
  return evaluate_kkt(sol, alpha, cov, nullptr);
}

WeightSolution target_search(const AlphaSet& alpha, const CovarianceModel& cov, const Target& target,
                             const SolverOptions& opts) {
  const SmaxResult sm = smax_solution(alpha, cov);
  const WeightSolution corner = corner_solution(alpha, cov);
  const double p_max = max_pnl(alpha).first;

  // feasible(sol) is monotone along P~: true on [P~*, P_bound], false above.
  std::function<bool(const WeightSolution&)> feasible;
  double goal = 0.0;
  bool sharpe = std::holds_alternative<SharpeMin>(target);
  if (sharpe) {
    goal = std::get<SharpeMin>(target).value;
    if (!(goal > 0.0)) throw Error(ErrorCode::InvalidTarget, "Sharpe target must be positive");
    if (goal > sm.s_max * (1.0 + 1e-10)) throw Error(ErrorCode::InfeasibleTarget, "Sharpe target above S_max");
    feasible = [goal](const WeightSolution& s) { return s.sharpe >= goal; };
  } else {
    goal = std::get<RiskMax>(target).value;
    if (!(goal > 0.0)) throw Error(ErrorCode::InvalidTarget, "risk limit must be positive");
    if (goal < sm.solution.risk * (1.0 - 1e-10))
      throw Error(ErrorCode::InfeasibleTarget, "risk limit below the maximum-Sharpe risk");
    feasible = [goal](const WeightSolution& s) { return s.risk <= goal; };
  }
  auto achieved = [sharpe](const WeightSolution& s) { return sharpe ? s.sharpe : s.risk; };

  if (feasible(corner)) return corner;
  double lo = sm.p_star, hi = p_max;
  WeightSolution best = solve_at_pnl(alpha, cov, lo, opts);
  if (!feasible(best)) {
    // Target within tolerance of the maximum-Sharpe point.
    best.notes.push_back("target at the maximum-Sharpe point");
    return best;
  }
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * std::abs(hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    WeightSolution s = solve_at_pnl(alpha, cov, mid, opts);
    if (feasible(s)) {
      lo = mid;
      best = std::move(s);
    } else {
      hi = mid;
    }
    if (std::abs(achieved(best) - goal) <= 1e-12 * std::abs(goal)) break;
  }
  if (std::abs(achieved(best) - goal) > 1e-8 * std::abs(goal))
    throw Error(ErrorCode::NumericalFailure, "target search did not reach the bound");
  return best;
}

std::vector<FrontierPoint> frontier(const AlphaSet& alpha, const CovarianceModel& cov, int points,
                                    const SolverOptions& opts) {
  if (points < 1) throw Error(ErrorCode::InvalidInput, "frontier needs at least one point");
  const double p_star = smax_solution(alpha, cov).p_star;
  const double p_max = max_pnl(alpha).first;
  std::vector<FrontierPoint> out;
  out.reserve(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    const double p = p_star + (p_max - p_star) * static_cast<double>(k) / points;
    const WeightSolution s = solve_at_pnl(alpha, cov, p, opts);
    out.push_back(FrontierPoint{s.pnl, s.risk, s.sharpe});
  }
  return out;
}

}  // namespace alphamix::factor
