#include <doctest.h>

#include <cmath>

#include "alphamix/costs.hpp"
#include "alphamix/factor.hpp"
#include "alphamix/oracle.hpp"
#include "support.hpp"

using namespace alphamix;
using doctest::Approx;
using testing_support::reference_min;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

MatrixXd uniform_corr(Index n, double rho) {
  MatrixXd m = MatrixXd::Constant(n, n, rho);
  m.diagonal().setOnes();
  return m;
}

template <class F>
void expect_code(ErrorCode code, F&& f) {
  try {
    f();
    FAIL("expected " << to_string(code));
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

// Minimum of w'Cw at fixed P~ under the full impact term
//   sum (a_i w_i - L_i |w_i|) - (1/n) Q' (sum tau_i |w_i|)^n = P~,  sum |w_i| = 1.
// For a fixed sign pattern and fixed T = sum tau_i |w_i| all constraints are
// linear, so enumerate patterns and scan T.
double impact_reference_r2(const VectorXd& a, const MatrixXd& c, const VectorXd& l, const VectorXd& tau, double qp,
                           double n, double p) {
  const Index N = a.size();
  double best = std::numeric_limits<double>::infinity();
  long total = 1;
  for (Index i = 0; i < N; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    std::vector<Index> j;
    std::vector<int> eta;
    long rest = code;
    for (Index i = 0; i < N; ++i) {
      const int s = static_cast<int>(rest % 3) - 1;
      rest /= 3;
      if (s) {
        j.push_back(i);
        eta.push_back(s);
      }
    }
    const Index m = static_cast<Index>(j.size());
    if (m < 3) continue;  // three linear constraints need at least three free weights
    auto solve_at = [&](double t, VectorXd& w) {
      MatrixXd k = MatrixXd::Zero(m + 3, m + 3);
      VectorXd rhs = VectorXd::Zero(m + 3);
      for (Index r = 0; r < m; ++r) {
        for (Index s = 0; s < m; ++s) k(r, s) = c(j[r], j[s]);
        k(r, m) = k(m, r) = eta[r];
        k(r, m + 1) = k(m + 1, r) = a(j[r]) - l(j[r]) * eta[r];
        k(r, m + 2) = k(m + 2, r) = tau(j[r]) * eta[r];
      }
      rhs(m) = 1.0;
      rhs(m + 1) = p + qp * std::pow(t, n) / n;
      rhs(m + 2) = t;
      Eigen::FullPivLU<MatrixXd> lu(k);
      if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
      w = lu.solve(rhs).head(m);
      for (Index r = 0; r < m; ++r)
        if (w(r) * eta[r] <= 0.0) return std::numeric_limits<double>::infinity();
      return w.dot(k.topLeftCorner(m, m) * w);
    };
    VectorXd w;
    double tlo = tau.minCoeff(), thi = tau.maxCoeff();
    const int grid = 400;
    int kbest = -1;
    double vbest = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= grid; ++g) {
      const double v = solve_at(tlo + (thi - tlo) * g / grid, w);
      if (v < vbest) {
        vbest = v;
        kbest = g;
      }
    }
    if (kbest < 0) continue;
    double lo = tlo + (thi - tlo) * std::max(0, kbest - 1) / grid;
    double hi = tlo + (thi - tlo) * std::min(grid, kbest + 1) / grid;
    for (int it = 0; it < 100; ++it) {
      const double x1 = lo + (hi - lo) / 3.0, x2 = hi - (hi - lo) / 3.0;
      if (solve_at(x1, w) < solve_at(x2, w))
        hi = x2;
      else
        lo = x1;
    }
    best = std::min({best, vbest, solve_at(0.5 * (lo + hi), w)});
  }
  return best;
}

}  // namespace

TEST_CASE("turnover reduction for uniform correlation") {
  for (Index n : {2, 4, 8, 16}) {
    for (double rho : {0.1, 0.5, 0.9}) {
      const auto info = costs::rho_star(uniform_corr(n, rho));
      CHECK(info.rho_star == Approx((1.0 + (n - 1) * rho) / n).epsilon(1e-10));
      CHECK(info.psi1 == Approx(1.0 + (n - 1) * rho).epsilon(1e-12));
    }
  }
  const auto four = costs::rho_star(uniform_corr(4, 0.5));
  CHECK(four.psi1 == Approx(2.5));
  CHECK(four.rho_star == Approx(0.625).epsilon(1e-12));
}

TEST_CASE("turnover reduction limits") {
  const auto full = costs::rho_star(MatrixXd::Ones(4, 4));
  CHECK(full.psi1 == Approx(4.0).epsilon(1e-12));
  CHECK((full.v1 - VectorXd::Constant(4, 0.5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(full.rho_star == Approx(1.0).epsilon(1e-12));

  // Identity: every unit vector is a top eigenvector; the projection of e gives e/2.
  const auto id = costs::rho_star(MatrixXd::Identity(4, 4));
  CHECK(id.degenerate);
  CHECK((id.v1 - VectorXd::Constant(4, 0.5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(id.rho_star == Approx(1.0 / (4.0 * 2.0) * 2.0).epsilon(1e-12));
  CHECK_FALSE(id.notes.empty());
}

TEST_CASE("turnover reduction rejects non-correlation input") {
  MatrixXd m = uniform_corr(3, 0.2);
  m(0, 0) = 2.0;
  expect_code(ErrorCode::NotCorrelation, [&] { (void)costs::rho_star(m); });
  MatrixXd bad = uniform_corr(3, -0.9);
  expect_code(ErrorCode::NotCorrelation, [&] { (void)costs::rho_star(bad); });
}

TEST_CASE("zero linear cost reproduces the cost-free solver") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 4 + static_cast<Index>(rng() % 30);
    const auto rf = testing_support::random_factor(n, 3, rng);
    const auto cov = CovarianceModel::factor(rf.xi2, rf.loadings, rf.phi);
    const AlphaSet a(testing_support::random_signed_alpha(n, rng), cov.variances().cwiseSqrt(),
                     testing_support::random_vector(n, rng, 0.05, 0.2));
    const auto sm = factor::smax_solution(a, cov);
    const double p = sm.p_star + 0.3 * (a.alphas().cwiseAbs().maxCoeff() - sm.p_star);
    costs::CostSpec spec;
    const auto x = costs::linear_cost_solve(a, cov, spec, p);
    const auto y = factor::solve_fixed_pnl(a, cov, p);
    CHECK((x.weights - y.weights).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("identical turnovers shift every active alpha") {
  const VectorXd alpha = vec({0.9, 0.7, 0.5, 0.4});
  const VectorXd var = vec({1.0, 0.8, 1.2, 0.6});
  const AlphaSet a(alpha, var.cwiseSqrt(), VectorXd::Constant(4, 0.1));
  const auto cov = CovarianceModel::diagonal(var);
  costs::CostSpec spec;
  spec.linear_rate = 0.5;
  spec.rho_star = 0.8;
  const double shift = 0.5 * 0.8 * 0.1;
  const AlphaSet shifted(alpha.array() - shift, var.cwiseSqrt());
  const auto sm = factor::smax_solution(shifted, cov);
  const double p = sm.p_star + 0.4 * (alpha.maxCoeff() - shift - sm.p_star);
  const auto x = costs::linear_cost_solve(a, cov, spec, p);
  const auto y = factor::solve_fixed_pnl(shifted, cov, p);
  CHECK((x.weights - y.weights).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(x.pnl == Approx(p).epsilon(1e-12));
}

TEST_CASE("cost-adjusted solutions match exhaustive search") {
  {
    const AlphaSet a(vec({3, 2, 1}), vec({1, 1, 1}), vec({1, 1, 1}));
    const auto cov = CovarianceModel::diagonal(vec({1, 1, 1}));
    costs::CostSpec spec;
    spec.per_stream = vec({0.5, 0.5, 0.5});
    const auto sm = costs::linear_cost_smax(a, cov, spec);
    const double p = sm.p_star * (1.0 + 1e-3);
    const auto x = costs::linear_cost_solve(a, cov, spec, p);
    const VectorXd l = *spec.per_stream;
    const auto ref = reference_min(a.alphas(), MatrixXd::Identity(3, 3), p, &l);
    REQUIRE(ref.has_value());
    CHECK((x.weights - ref->w).cwiseAbs().maxCoeff() < 1e-8);
  }
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 60; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 4);
    const MatrixXd c = testing_support::random_pd(n, rng);
    const AlphaSet a(testing_support::random_signed_alpha(n, rng), c.diagonal().cwiseSqrt(),
                     testing_support::random_vector(n, rng, 0.05, 0.5));
    const auto cov = CovarianceModel::dense(c);
    costs::CostSpec spec;
    spec.linear_rate = 0.4;
    spec.rho_star = 0.9;
    const VectorXd l = costs::per_stream_costs(spec, a, 0.9);
    if ((a.alphas().cwiseAbs() - l).maxCoeff() <= 0.05) continue;
    const auto sm = costs::linear_cost_smax(a, cov, spec);
    const double pm = (a.alphas().cwiseAbs() - l).maxCoeff();
    // Costs can shrink the maximum-Sharpe support to the single top stream.
    if (sm.p_star >= pm * (1.0 - 1e-9)) continue;
    const double p = sm.p_star + 0.5 * (pm - sm.p_star);
    const auto x = costs::linear_cost_solve(a, cov, spec, p);
    const auto ref = reference_min(a.alphas(), c, p, &l);
    REQUIRE(ref.has_value());
    CHECK(x.risk == Approx(std::sqrt(ref->r2)).epsilon(1e-8));
    for (Index i = 0; i < n; ++i) CHECK(x.mu >= x.mu_tilde * l(i) - 1e-10);
    const auto rep = oracle::certify(x, a, cov, &l);
    CHECK(rep.passes());
  }
}

TEST_CASE("spectral turnover reduction is recomputed on the converged support") {
  std::mt19937_64 rng(79);
  const Index n = 8;
  const MatrixXd c = testing_support::random_pd(n, rng, 0.3);
  const VectorXd sd = c.diagonal().cwiseSqrt();
  const MatrixXd psi = sd.cwiseInverse().asDiagonal() * c * sd.cwiseInverse().asDiagonal();
  const AlphaSet a(testing_support::random_signed_alpha(n, rng), sd, testing_support::random_vector(n, rng, 0.1, 0.3));
  const auto cov = CovarianceModel::dense(c);
  costs::CostSpec spec;
  spec.linear_rate = 0.3;
  const auto sm = factor::smax_solution(a, cov);
  const double p = sm.p_star + 0.6 * (a.alphas().cwiseAbs().maxCoeff() - sm.p_star);
  WeightSolution x;
  try {
    x = costs::linear_cost_solve(a, cov, spec, p, &psi);
  } catch (const Error& e) {
    // The target may exceed what the cost-adjusted problem can reach.
    CHECK(e.code() == ErrorCode::InfeasibleTarget);
    return;
  }
  const Index m = static_cast<Index>(x.support.size());
  MatrixXd sub(m, m);
  for (Index r = 0; r < m; ++r)
    for (Index s = 0; s < m; ++s) sub(r, s) = psi(x.support[r], x.support[s]);
  const double rho = costs::rho_star(sub).rho_star;
  const VectorXd l = costs::per_stream_costs(spec, a, rho);
  const auto again = factor::solve_with_costs(a, cov, p, l);
  CHECK(again.support == x.support);
  CHECK((again.weights - x.weights).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("impact linearization") {
  const AlphaSet a(vec({0.05, 0.04, 0.03}), vec({1, 1, 1}), VectorXd::Constant(3, 0.1));
  costs::CostSpec spec;
  spec.linear_rate = 0.01;
  const auto none = costs::impact_effective_costs(spec, a);
  CHECK((none.eff_costs - costs::per_stream_costs(spec, a, 1.0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(none.pnl_shift == 0.0);

  costs::CostSpec q;
  q.impact_coeff = 1.0;
  q.impact_exponent = 2.0;
  q.rho_star = 1.0;
  q.investment = 1.0;
  const auto lin = costs::impact_effective_costs(q, a);
  CHECK((lin.eff_costs - VectorXd::Constant(3, 0.01)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(lin.pnl_shift == Approx(0.005).epsilon(1e-14));

  q.investment = 2.0;
  const auto dbl = costs::impact_effective_costs(q, a);
  CHECK((dbl.eff_costs - 2.0 * lin.eff_costs).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("impact with identical turnovers only shifts the target") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 3 + static_cast<Index>(rng() % 10);
    const MatrixXd c = testing_support::random_pd(n, rng);
    const AlphaSet a(testing_support::random_signed_alpha(n, rng), c.diagonal().cwiseSqrt(),
                     VectorXd::Constant(n, 0.2));
    const auto cov = CovarianceModel::dense(c);
    costs::CostSpec spec;
    spec.linear_rate = 0.2;
    spec.impact_coeff = 0.5;
    spec.impact_exponent = 1.5;
    spec.rho_star = 0.7;
    spec.investment = 1.3;
    const auto lin = costs::impact_effective_costs(spec, a);
    const auto sm = factor::smax_with_costs(a, cov, lin.eff_costs);
    const double top = (a.alphas().cwiseAbs() - lin.eff_costs).maxCoeff();
    const double p_lin = sm.p_star + 0.5 * (top - sm.p_star);
    const double p = lin.actual_pnl(p_lin);
    const auto x = costs::impact_solve(a, cov, spec, p);
    // Linear costs alone at the target moved by the linearized impact constant.
    const auto y = costs::linear_cost_solve(a, cov, spec, p + lin.pnl_shift);
    CHECK((x.weights - y.weights).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(x.pnl == Approx(p).epsilon(1e-12));

    costs::CostSpec no_q = spec;
    no_q.impact_coeff = 0.0;
    const auto z = costs::impact_solve(a, cov, no_q, p);
    const auto u = costs::linear_cost_solve(a, cov, no_q, p);
    CHECK((z.weights - u.weights).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("linearized impact is close to the full nonlinear problem for a narrow turnover spread") {
  std::mt19937_64 rng(89);
  int compared = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 4;
    const MatrixXd c = testing_support::random_pd(n, rng);
    const VectorXd tau = 0.2 * (1.0 + testing_support::random_vector(n, rng, -0.05, 0.05).array()).matrix();
    const AlphaSet a(testing_support::random_signed_alpha(n, rng), c.diagonal().cwiseSqrt(), tau);
    const auto cov = CovarianceModel::dense(c);
    costs::CostSpec spec;
    spec.linear_rate = 0.1;
    spec.impact_coeff = 1.0;
    spec.impact_exponent = 2.0;
    spec.rho_star = 1.0;
    const auto lin = costs::impact_effective_costs(spec, a);
    const auto sm = factor::smax_with_costs(a, cov, lin.eff_costs);
    const double top = (a.alphas().cwiseAbs() - lin.eff_costs).maxCoeff();
    const double p = lin.actual_pnl(sm.p_star + 0.3 * (top - sm.p_star));
    const auto x = costs::impact_solve(a, cov, spec, p);
    if (x.support.size() < 3) continue;
    const VectorXd l = costs::per_stream_costs(spec, a, 1.0);
    const double ref = impact_reference_r2(a.alphas(), c, l, tau, lin.q_prime, 2.0, p);
    if (!std::isfinite(ref)) continue;
    CHECK(x.risk * x.risk == Approx(ref).epsilon(0.01));
    ++compared;
  }
  CHECK(compared > 0);
}

TEST_CASE("capacity closed form for one stream") {
  const AlphaSet a(vec({0.01}), vec({1}), vec({0.1}));
  const auto cov = CovarianceModel::diagonal(vec({1}));
  costs::CostSpec spec;
  spec.impact_coeff = 1.0;
  spec.impact_exponent = 2.0;
  spec.rho_star = 1.0;
  const auto res = costs::capacity_search(a, cov, spec, 0.01, 100.0);
  CHECK(std::abs(res.i_star - 1.0) <= 1e-6);
  CHECK(std::abs(res.pnl_at_star - 0.005) <= 1e-8);

  spec.impact_coeff = 4.0;
  const auto q4 = costs::capacity_search(a, cov, spec, 0.01, 100.0);
  CHECK(q4.i_star == Approx(0.25).epsilon(1e-6));
}

TEST_CASE("capacity errors") {
  const AlphaSet a(vec({0.01, 0.02}), vec({1, 1}), vec({0.1, 0.1}));
  const auto cov = CovarianceModel::diagonal(vec({1, 1}));
  costs::CostSpec spec;
  spec.linear_rate = 1.0;
  expect_code(ErrorCode::UnboundedCapacity, [&] { (void)costs::capacity_search(a, cov, spec, 0.1, 10.0); });
  spec.impact_coeff = 1.0;
  spec.per_stream = vec({0.05, 0.05});
  expect_code(ErrorCode::NoProfitableScale, [&] { (void)costs::capacity_search(a, cov, spec, 0.1, 10.0); });
}

TEST_CASE("capacity matches a dense grid of the optimized pnl") {
  std::mt19937_64 rng(97);
  const Index n = 5;
  const MatrixXd c = 1e-4 * testing_support::random_pd(n, rng);
  const AlphaSet a(0.01 * testing_support::random_vector(n, rng, 0.2, 1.0), c.diagonal().cwiseSqrt(),
                   testing_support::random_vector(n, rng, 0.08, 0.12));
  const auto cov = CovarianceModel::dense(c);
  costs::CostSpec spec;
  spec.linear_rate = 0.005;
  spec.impact_coeff = 1.0;
  spec.impact_exponent = 1.5;
  spec.rho_star = 0.8;
  const auto res = costs::capacity_search(a, cov, spec, 1e-3, 1e3);
  double best = -1.0, prev = -1.0;
  bool rising = true, unimodal = true;
  const int grid = 10000;
  for (int k = 0; k <= grid; ++k) {
    const double level = 1e-3 * std::pow(1e6, static_cast<double>(k) / grid);
    const auto v = costs::optimized_pnl(a, cov, spec, level);
    const double y = v ? v->first : -1.0;
    if (y < prev && prev > 0.0) rising = false;
    if (!rising && y > prev + 1e-15) unimodal = false;
    best = std::max(best, y);
    prev = y;
  }
  CHECK(unimodal);
  CHECK(res.pnl_at_star >= best - 1e-9 * std::abs(best));
}
