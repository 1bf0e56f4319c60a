#include "alphamix/diagonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace alphamix::diag {

namespace {

void require_non_negative(const AlphaSet& alpha) {
  if ((alpha.alphas().array() < 0.0).any()) throw Error(ErrorCode::NegativeAlpha, "diagonal routines need alpha >= 0");
}

CovarianceModel diag_cov(const AlphaSet& alpha) { return CovarianceModel::diagonal(alpha.vols().array().square()); }

// Indices by decreasing alpha; ties keep the lower index first.
std::vector<Index> by_decreasing_alpha(const VectorXd& a) {
  std::vector<Index> order(static_cast<std::size_t>(a.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x) > a(y); });
  return order;
}

WeightSolution top_stream(const AlphaSet& alpha) {
  return corner_solution(alpha, diag_cov(alpha));
}

// Roots of qa x^2 + qb x + qc = 0 without cancellation.
std::vector<double> quadratic_roots(double qa, double qb, double qc) {
  std::vector<double> roots;
  if (qa == 0.0) {
    if (qb != 0.0) roots.push_back(-qc / qb);
    return roots;
  }
  double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) {
    if (disc > -1e-14 * qb * qb) disc = 0.0;
    else return roots;
  }
  const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
  if (q != 0.0) {
    roots.push_back(q / qa);
    roots.push_back(qc / q);
  } else {
    roots.push_back(0.0);
  }
  return roots;
}

}  // namespace

double diag_smax(const AlphaSet& alpha) { return alpha.alpha_hat().norm(); }

double diag_pstar(const AlphaSet& alpha) {
  const VectorXd nu2 = alpha.nu().array().square();
  const VectorXd& a = alpha.alphas();
  const double den = nu2.dot(a);
  if (!(den > 0.0)) throw Error(ErrorCode::DegenerateInput, "all alphas are zero");
  return nu2.dot(a.cwiseProduct(a)) / den;
}

GreedyOrder greedy_sort(const AlphaSet& alpha) {
  require_non_negative(alpha);
  const Index n = alpha.size();
  const VectorXd nu2 = alpha.nu().array().square();
  const VectorXd& a = alpha.alphas();

  GreedyOrder out;
  out.pnl_path.resize(n);
  out.sharpe_path.resize(n);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  double num = 0.0, den = 0.0;
  for (Index k = 0; k < n; ++k) {
    Index pick = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double nn = num + nu2(i) * a(i) * a(i);
      const double dd = den + nu2(i) * a(i);
      const double p = dd > 0.0 ? nn / dd : 0.0;
      if (p > best) {
        best = p;
        pick = i;
      }
    }
    used[static_cast<std::size_t>(pick)] = true;
    num += nu2(pick) * a(pick) * a(pick);
    den += nu2(pick) * a(pick);
    out.permutation.push_back(pick);
    out.pnl_path(k) = best;
    out.sharpe_path(k) = std::sqrt(num);
  }
  return out;
}

WeightSolution quasi_optimal(const AlphaSet& alpha, double s_star) {
  require_non_negative(alpha);
  if (!(s_star > 0.0)) throw Error(ErrorCode::InvalidTarget, "Sharpe target must be positive");
  const double smax = diag_smax(alpha);
  if (s_star > smax * (1.0 + 1e-12)) throw Error(ErrorCode::InfeasibleSharpe, "Sharpe target above S_max");
  s_star = std::min(s_star, smax);

  const GreedyOrder order = greedy_sort(alpha);
  const VectorXd ah = alpha.alpha_hat();
  const VectorXd nu = alpha.nu();
  const Index n = alpha.size();

  Index kstar = 0;
  while (kstar < n - 1 && order.sharpe_path(kstar) < s_star) ++kstar;

  VectorXd w_hat = VectorXd::Zero(n);
  double eta = 1.0;
  if (kstar == 0) {
    w_hat(order.permutation[0]) = 1.0;
  } else {
    const double prev = order.sharpe_path(kstar - 1);
    const double A = prev * prev;
    const double last = ah(order.permutation[static_cast<std::size_t>(kstar)]);
    const double h = last * last;
    const double s2 = s_star * s_star;
    // At S* = S(K*) eta = 1 is a double root and the quadratic loses half the digits.
    double chosen = std::numeric_limits<double>::quiet_NaN();
    if (std::abs(order.sharpe_path(kstar) - s_star) <= 4.0 * std::numeric_limits<double>::epsilon() * s_star) {
      chosen = 1.0;
    } else {
      for (double r : quadratic_roots(h * (h - s2), 2.0 * A * h, A * (A - s2))) {
        if (r > 0.0 && r <= 1.0 + 1e-12 && !(chosen <= r)) chosen = std::min(r, 1.0);
      }
    }
    if (std::isnan(chosen)) throw Error(ErrorCode::NumericalFailure, "no admissible root for eta");
    eta = chosen;
    for (Index k = 0; k < kstar; ++k) {
      const Index i = order.permutation[static_cast<std::size_t>(k)];
      w_hat(i) = ah(i);
    }
    const Index i = order.permutation[static_cast<std::size_t>(kstar)];
    w_hat(i) = eta * ah(i);
  }
  const CovarianceModel cov = diag_cov(alpha);
  WeightSolution sol = make_solution(nu.cwiseProduct(w_hat), 0.0, 0.0, alpha, cov);
  sol.notes.push_back("quasi-optimal: K*=" + std::to_string(kstar + 1) + " eta=" + std::to_string(eta));
  if (std::abs(sol.sharpe - s_star) > 1e-9 * std::max(1.0, s_star))
    throw Error(ErrorCode::NumericalFailure, "quasi-optimal weights miss the Sharpe target");
  return sol;
}

DiagonalSupportState select_support(const AlphaSet& alpha, double p_tilde) {
  require_non_negative(alpha);
  const Index n = alpha.size();
  const VectorXd& a = alpha.alphas();
  const VectorXd nu = alpha.nu();
  const VectorXd nu2 = nu.array().square();
  const auto order = by_decreasing_alpha(a);

  DiagonalSupportState best;
  bool found = false;
  bool degenerate = false;
  const double amax = a(order.front());
  double s0 = 0.0, s1 = 0.0, den = 0.0, an = 0.0, bn = 0.0, nn = 0.0;
  for (Index K = 1; K <= n; ++K) {
    const Index j = order[static_cast<std::size_t>(K - 1)];
    const double d = a(j) - p_tilde;
    s0 += nu2(j) * d;
    s1 += nu2(j) * a(j) * d;
    an += nu2(j) * a(j);
    bn += nu2(j) * a(j) * a(j);
    nn += nu2(j);
    // Lagrange identity for nu^2 b^2 - a^2, free of cancellation for close alphas.
    for (Index q = 0; q < K - 1; ++q) {
      const Index i = order[static_cast<std::size_t>(q)];
      const double g = a(i) - a(j);
      den += nu2(i) * nu2(j) * g * g;
    }
    if (K < 2) continue;
    if (den <= 1e-14 * nn * nn * amax * amax) {
      degenerate = true;
      continue;
    }
    // Stationarity: w_i = nu_i^2 (lambda alpha_i - kappa), lambda = -s0/den, kappa = -s1/den.
    if (!(s0 < 0.0)) continue;
    const double threshold = s1 / s0;
    const double last = a(order[static_cast<std::size_t>(K - 1)]);
    if (!(last > threshold)) continue;
    if (K < n && a(order[static_cast<std::size_t>(K)]) > threshold) continue;
    best.K = K;
    best.a = an;
    best.b_sq = bn;
    best.nu_sq = nn;
    best.mu = -s1 / den;
    best.mu_tilde = s0 / den;
    found = true;
  }
  if (!found) {
    if (degenerate) throw Error(ErrorCode::DegenerateInput, "identical alphas on the candidate support");
    throw Error(ErrorCode::NumericalFailure, "no self-consistent support size");
  }
  best.order = order;
  return best;
}

WeightSolution min_vol_fixed_pnl_diag(const AlphaSet& alpha, double p_tilde) {
  require_non_negative(alpha);
  const VectorXd& a = alpha.alphas();
  const double amax = a.maxCoeff();
  if (!std::isfinite(p_tilde)) throw Error(ErrorCode::InvalidTarget, "non-finite P&L target");
  if (p_tilde > amax) throw Error(ErrorCode::InfeasibleTarget, "P&L target above max alpha");
  const double pstar = diag_pstar(alpha);
  if (p_tilde < pstar * (1.0 - 1e-12)) throw Error(ErrorCode::BelowSharpeMaxPnl, "P&L target below P~*");
  p_tilde = std::max(p_tilde, pstar);
  if (p_tilde >= amax * (1.0 - 1e-14) || alpha.size() == 1) return top_stream(alpha);

  const DiagonalSupportState st = select_support(alpha, p_tilde);
  const VectorXd nu = alpha.nu();
  const VectorXd nu2 = nu.array().square();
  double den = 0.0;
  for (Index p = 0; p < st.K; ++p)
    for (Index q = 0; q < p; ++q) {
      const Index i = st.order[static_cast<std::size_t>(p)], j = st.order[static_cast<std::size_t>(q)];
      den += nu2(i) * nu2(j) * (a(i) - a(j)) * (a(i) - a(j));
    }
  // Deviation form of the closed-form weights: w_i = nu_i^2 sum_j nu_j^2 (alpha_j - P)(alpha_j - alpha_i) / den.
  VectorXd w = VectorXd::Zero(alpha.size());
  for (Index p = 0; p < st.K; ++p) {
    const Index i = st.order[static_cast<std::size_t>(p)];
    double s = 0.0;
    for (Index q = 0; q < st.K; ++q) {
      const Index j = st.order[static_cast<std::size_t>(q)];
      s += nu2(j) * (a(j) - p_tilde) * (a(j) - a(i));
    }
    w(i) = nu2(i) * s / den;
  }
  WeightSolution sol = make_solution(w, st.mu, st.mu_tilde, alpha, diag_cov(alpha));
  sol.certified_global = true;
  if (std::abs(sol.pnl - p_tilde) > 1e-10 * std::max(1.0, std::abs(p_tilde)))
    throw Error(ErrorCode::NumericalFailure, "closed-form weights miss the P&L target");
  return sol;
}

WeightSolution sharpe_target_diag(const AlphaSet& alpha, double s_star) {
  require_non_negative(alpha);
  if (!(s_star > 0.0)) throw Error(ErrorCode::InvalidTarget, "Sharpe target must be positive");
  const double smax = diag_smax(alpha);
  if (s_star > smax * (1.0 + 1e-12)) throw Error(ErrorCode::InfeasibleSharpe, "Sharpe target above S_max");
  const double pstar = diag_pstar(alpha);
  if (s_star >= smax * (1.0 - 1e-15)) return min_vol_fixed_pnl_diag(alpha, pstar);
  const WeightSolution top = top_stream(alpha);
  if (s_star <= top.sharpe) return top;

  double lo = pstar, hi = alpha.alphas().maxCoeff();
  WeightSolution best = min_vol_fixed_pnl_diag(alpha, lo);
  for (int it = 0; it < 300 && hi - lo > 2.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    WeightSolution s = min_vol_fixed_pnl_diag(alpha, mid);
    if (std::abs(s.sharpe - s_star) < std::abs(best.sharpe - s_star)) best = s;
    if (s.sharpe >= s_star) lo = mid;
    else hi = mid;
  }
  if (std::abs(best.sharpe - s_star) > 1e-9 * std::max(1.0, s_star))
    throw Error(ErrorCode::NumericalFailure, "Sharpe bisection did not reach the target");
  return best;
}

WeightSolution sphere_optimal(const AlphaSet& alpha, double s_star, SphereSearchState* state_out) {
  require_non_negative(alpha);
  if (!(s_star > 0.0)) throw Error(ErrorCode::InvalidTarget, "Sharpe target must be positive");
  const Index n = alpha.size();
  const VectorXd nu = alpha.nu();
  const VectorXd ah = alpha.alpha_hat();
  const VectorXd& av = alpha.alphas();

  SphereSearchState st;
  st.a = ah.norm();
  if (s_star >= st.a) throw Error(ErrorCode::InfeasibleSharpe, "Sharpe target at or above S_max");
  const WeightSolution top = top_stream(alpha);
  if (s_star <= top.sharpe) {
    WeightSolution sol = top;
    sol.notes.push_back("Sharpe target at or below the best single stream: corner solution");
    return sol;
  }

  st.phi = ah / st.a;
  st.phi_tilde = nu.dot(st.phi);
  const double n2 = nu.squaredNorm();
  st.kappa = std::sqrt(std::max(0.0, n2 - st.phi_tilde * st.phi_tilde));
  if (st.kappa <= 1e-12 * std::sqrt(n2)) throw Error(ErrorCode::DegenerateInput, "alpha_hat parallel to nu");
  st.chi1 = (nu - st.phi_tilde * st.phi) / st.kappa;
  st.r = std::sqrt(st.a * st.a / (s_star * s_star) - 1.0);
  st.beta_star = -st.phi_tilde / st.kappa;

  std::vector<Index> ascending(static_cast<std::size_t>(n));
  std::iota(ascending.begin(), ascending.end(), Index{0});
  std::stable_sort(ascending.begin(), ascending.end(), [&](Index x, Index y) { return av(x) < av(y); });

  const VectorXd& phi = st.phi;
  const double kap = st.kappa, pt = st.phi_tilde;

  // South Pole: beta1 = -r is admissible when phi - r chi1 is non-negative.
  if (-st.r > st.beta_star) {
    const VectorXd pole = phi - st.r * st.chi1;
    if (pole.minCoeff() >= 0.0) {
      st.south_pole = true;
      st.beta1 = -st.r;
      const VectorXd w_hat = pole / (pt - st.r * kap);
      WeightSolution sol = make_solution(nu.cwiseProduct(w_hat), 0.0, 0.0, alpha, diag_cov(alpha));
      sol.notes.push_back(pole.minCoeff() <= 1e-14 ? "South Pole corner with an exactly vanishing weight"
                                                  : "South Pole corner");
      if (state_out) *state_out = st;
      return sol;
    }
  }

  // Evaluates the left side of the beta1 root equation; the zero set T+ is grown from the
  // displayed threshold set until the minimal-norm chi(2) respects the bounds on T-.
  auto evaluate = [&](double b1, SphereSearchState& s) -> bool {
    const double b2 = std::sqrt(std::max(0.0, st.r * st.r - b1 * b1));
    if (!(b2 > 0.0)) return false;
    const VectorXd l = -(b1 * nu + (kap - b1 * pt) * phi) / (kap * b2);
    const double tol = 1e-14 * std::max(1.0, l.cwiseAbs().maxCoeff());
    const Index k0 = (l.array() > 0.0).count();
    std::vector<Index> candidates;
    for (Index k = k0; k <= n - 2; ++k) candidates.push_back(k);
    for (Index k = 0; k < std::min(k0, n - 1); ++k) candidates.push_back(k);
    for (Index k : candidates) {
      if (k > 0 && av(ascending[static_cast<std::size_t>(k - 1)]) == av(ascending[static_cast<std::size_t>(k)]))
        continue;
      double zeta = 0, chi = 0, xi = 0, sg = 0, vp = 0, lm = 0;
      for (Index p = 0; p < n; ++p) {
        const Index i = ascending[static_cast<std::size_t>(p)];
        if (p < k) {
          zeta += l(i) * l(i);
          chi -= nu(i) * l(i);
          xi -= phi(i) * l(i);
        } else {
          sg += phi(i) * phi(i);
          vp += nu(i) * phi(i);
          lm += nu(i) * nu(i);
        }
      }
      const double det = sg * lm - vp * vp;
      if (!(det > 1e-300)) continue;
      const double cm = (lm * xi - vp * chi) / det;
      const double dm = (sg * chi - vp * xi) / det;
      bool ok = true;
      for (Index p = 0; p < n && ok; ++p) {
        const Index i = ascending[static_cast<std::size_t>(p)];
        const double x = cm * phi(i) + dm * nu(i);
        ok = p < k ? x <= l(i) + tol : x >= l(i) - tol;
      }
      if (!ok) continue;
      const double g = sg * chi * chi + lm * xi * xi - 2.0 * vp * chi * xi;
      s.beta1 = b1;
      s.beta2 = b2;
      s.zeta = zeta;
      s.chi = chi;
      s.xi = xi;
      s.sigma = sg;
      s.phi_minus = vp;
      s.lambda = lm;
      s.c_minus = cm;
      s.d_minus = dm;
      s.lhs = zeta + g / det;
      s.t_plus.assign(ascending.begin(), ascending.begin() + k);
      s.t_minus.assign(ascending.begin() + k, ascending.end());
      return true;
    }
    return false;
  };
  auto lhs_at = [&](double b1, SphereSearchState& s) {
    return evaluate(b1, s) ? s.lhs : std::numeric_limits<double>::infinity();
  };

  // Starting value from the quasi-optimal weights.
  const WeightSolution quasi = quasi_optimal(alpha, s_star);
  const VectorXd z = quasi.weights.cwiseQuotient(nu);  // hat-space weights, sum nu z = 1
  const double zphi = z.dot(phi);
  st.beta1_hat = (1.0 - pt * zphi) / (kap * zphi);

  double lo = std::max(st.beta_star, -st.r);
  double hi = std::min(st.beta1_hat, st.r);
  SphereSearchState trial = st;
  if (!(lhs_at(hi, trial) <= 1.0 + 1e-10)) {
    // The admissible range can start exactly at the root (two streams left in T-), so
    // rounding in the starting value may land just outside it. Walk towards r.
    const double start = hi, top = st.r * (1.0 - 1e-15);
    bool found_hi = false;
    for (double step = 1e-12; step <= 1.0 && !found_hi; step *= 10.0) {
      hi = start + step * (top - start);
      found_hi = lhs_at(hi, trial) <= 1.0 + 1e-10;
    }
    if (!found_hi) throw Error(ErrorCode::NumericalFailure, "beta1 bracket has no admissible upper end");
  }
  SphereSearchState found = trial;
  int it = 0;
  for (; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = lhs_at(mid, trial);
    if (std::abs(v - 1.0) <= 1e-10) {
      found = trial;
      hi = mid;
      break;
    }
    if (v > 1.0) {
      lo = mid;
    } else {
      hi = mid;
      found = trial;
    }
    if (hi - lo <= 1e-14) break;
  }
  if (!evaluate(hi, found)) throw Error(ErrorCode::NumericalFailure, "no admissible partition at the final beta1");
  found.iterations = it + 1;

  const double b1 = found.beta1, b2 = found.beta2;
  const double g = 1.0 / (pt + b1 * kap);
  const double cphi = 1.0 - b1 * pt / kap + b2 * found.c_minus;
  const double cnu = b1 / kap + b2 * found.d_minus;
  VectorXd w_hat = VectorXd::Zero(n);
  for (Index i : found.t_minus) w_hat(i) = g * (cphi * phi(i) + cnu * nu(i));
  if (w_hat.minCoeff() < -1e-10 * w_hat.cwiseAbs().maxCoeff())
    throw Error(ErrorCode::NumericalFailure, "sphere construction produced a negative weight");
  w_hat = w_hat.cwiseMax(0.0);

  // Carry over the scalar state computed before the search.
  found.phi = st.phi;
  found.a = st.a;
  found.kappa = st.kappa;
  found.phi_tilde = st.phi_tilde;
  found.chi1 = st.chi1;
  found.r = st.r;
  found.beta_star = st.beta_star;
  found.beta1_hat = st.beta1_hat;
  if (state_out) *state_out = found;

  WeightSolution sol = make_solution(nu.cwiseProduct(w_hat), 0.0, 0.0, alpha, diag_cov(alpha));
  sol.iterations = found.iterations;
  if (std::abs(sol.sharpe - s_star) > 1e-8 * std::max(1.0, s_star))
    throw Error(ErrorCode::NumericalFailure, "sphere weights miss the Sharpe target");
  sol.certified_global = true;
  return sol;
}

}  // namespace alphamix::diag
