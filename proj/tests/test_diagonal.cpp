#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alphamix/diagonal.hpp"
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

AlphaSet fixture() { return AlphaSet(vec({3, 2, 1}), vec({1, 1, 1})); }

// Greedy relaxation computed from scratch: at each step add the stream that
// maximizes P(K) = sum alpha_hat^2 / sum nu alpha_hat, weights proportional to
// nu_i alpha_hat_i, the last active one scaled by eta in (0, 1].
VectorXd reference_quasi(const AlphaSet& a, double s_star) {
  const VectorXd ah = a.alpha_hat(), nu = a.nu();
  std::vector<Index> order;
  std::vector<bool> used(static_cast<std::size_t>(a.size()), false);
  double num = 0.0, den = 0.0;
  for (Index step = 0; step < a.size(); ++step) {
    Index pick = -1;
    double best = -1.0;
    for (Index i = 0; i < a.size(); ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double p = (num + ah(i) * ah(i)) / (den + nu(i) * ah(i));
      if (p > best) {
        best = p;
        pick = i;
      }
    }
    used[static_cast<std::size_t>(pick)] = true;
    order.push_back(pick);
    num += ah(pick) * ah(pick);
    den += nu(pick) * ah(pick);
  }
  double b = 0.0;
  std::size_t k = 0;
  for (; k < order.size(); ++k) {
    const double next = b + ah(order[k]) * ah(order[k]);
    if (std::sqrt(next) >= s_star) break;
    b = next;
  }
  const double t = ah(order[k]) * ah(order[k]);
  auto sharpe = [&](double eta) { return (b + eta * t) / std::sqrt(b + eta * eta * t); };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (sharpe(mid) < s_star ? lo : hi) = mid;
  }
  VectorXd w = VectorXd::Zero(a.size());
  for (std::size_t r = 0; r < k; ++r) w(order[r]) = nu(order[r]) * ah(order[r]);
  w(order[k]) = 0.5 * (lo + hi) * nu(order[k]) * ah(order[k]);
  return w / w.sum();
}

double sharpe_diag(const AlphaSet& a, const VectorXd& w) {
  return a.alphas().dot(w) / std::sqrt(w.cwiseProduct(a.vols()).squaredNorm());
}

// Random diagonal instance with alpha_hat and nu well separated.
AlphaSet random_diag(Index n, std::mt19937_64& rng) {
  for (;;) {
    const VectorXd a = testing_support::random_vector(n, rng, 0.05, 1.0);
    const VectorXd s = testing_support::random_vector(n, rng, 0.5, 2.0);
    const AlphaSet set(a, s);
    VectorXd ah = set.alpha_hat(), nu = set.nu();
    std::sort(ah.data(), ah.data() + n);
    std::sort(nu.data(), nu.data() + n);
    bool ok = true;
    for (Index i = 1; i < n && ok; ++i) ok = ah(i) - ah(i - 1) > 1e-3 && nu(i) - nu(i - 1) > 1e-3;
    if (ok) return set;
  }
}

}  // namespace

TEST_CASE("greedy sort on the worked fixture") {
  const auto g = diag::greedy_sort(fixture());
  CHECK(g.permutation == std::vector<Index>{0, 1, 2});
  CHECK(g.pnl_path(0) == Approx(3.0));
  CHECK(g.pnl_path(1) == Approx(2.6).epsilon(1e-14));
  CHECK(g.pnl_path(2) == Approx(7.0 / 3.0).epsilon(1e-14));
  CHECK(g.sharpe_path(1) == Approx(std::sqrt(13.0)).epsilon(1e-14));
  CHECK(g.sharpe_path(2) == Approx(std::sqrt(14.0)).epsilon(1e-14));
}

TEST_CASE("greedy sort ties and single stream") {
  const auto g = diag::greedy_sort(AlphaSet(vec({0.4, 0.4, 0.4}), vec({1, 1, 1})));
  CHECK(g.permutation == std::vector<Index>{0, 1, 2});
  for (Index k = 0; k < 3; ++k) CHECK(g.pnl_path(k) == Approx(0.4).epsilon(1e-14));
  const auto one = diag::greedy_sort(AlphaSet(vec({0.7}), vec({2})));
  CHECK(one.permutation.size() == 1);
  CHECK(one.pnl_path(0) == Approx(0.7));
}

TEST_CASE("greedy P(K) is strictly decreasing") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 19);
    const auto g = diag::greedy_sort(random_diag(n, rng));
    for (Index k = 1; k < n; ++k) REQUIRE(g.pnl_path(k) < g.pnl_path(k - 1));
  }
}

TEST_CASE("quasi-optimal weights on the worked fixture") {
  const auto sol = diag::quasi_optimal(fixture(), 3.3);
  // eta solves (9 + 4 eta) / sqrt(9 + 4 eta^2) = 3.3 on (0, 1].
  const double disc = 72.0 * 72.0 - 4.0 * 27.56 * 17.01;
  const double eta = (72.0 - std::sqrt(disc)) / (2.0 * 27.56);
  CHECK(eta == Approx(0.262657).epsilon(1e-5));
  CHECK(sol.weights(0) == Approx(3.0 / (3.0 + 2.0 * eta)).epsilon(1e-12));
  CHECK(sol.weights(1) == Approx(2.0 * eta / (3.0 + 2.0 * eta)).epsilon(1e-12));
  CHECK(sol.weights(2) == 0.0);
  CHECK(sol.sharpe == Approx(3.3).epsilon(1e-12));
  CHECK((sol.weights - reference_quasi(fixture(), 3.3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quasi-optimal endpoints") {
  const AlphaSet a = fixture();
  const auto top = diag::quasi_optimal(a, std::sqrt(14.0));
  CHECK((top.weights - vec({0.5, 1.0 / 3.0, 1.0 / 6.0})).cwiseAbs().maxCoeff() < 1e-12);
  const auto k2 = diag::quasi_optimal(a, std::sqrt(13.0));
  CHECK((k2.weights - vec({0.6, 0.4, 0.0})).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quasi-optimal hits the Sharpe target with non-negative weights") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 15);
    const AlphaSet a = random_diag(n, rng);
    const double smax = std::sqrt(a.alpha_hat().squaredNorm());
    const double top = a.alpha_hat().maxCoeff();
    std::uniform_real_distribution<double> u(top + 1e-6 * (smax - top), smax);
    const double s = u(rng);
    const auto sol = diag::quasi_optimal(a, s);
    CHECK(sol.sharpe == Approx(s).epsilon(1e-9));
    CHECK(sol.weights.minCoeff() >= 0.0);
    CHECK((sol.weights - reference_quasi(a, s)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("minimum volatility at fixed pnl on the worked fixture") {
  const AlphaSet a = fixture();
  const auto sol = diag::min_vol_fixed_pnl_diag(a, 2.8);
  CHECK((sol.weights - vec({0.8, 0.2, 0.0})).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sol.risk == Approx(std::sqrt(0.68)).epsilon(1e-12));
  CHECK(sol.sharpe == Approx(2.8 / std::sqrt(0.68)).epsilon(1e-12));
  const auto st = diag::select_support(a, 2.8);
  CHECK(st.K == 2);

  const auto smax = diag::min_vol_fixed_pnl_diag(a, 7.0 / 3.0);
  CHECK((smax.weights - vec({0.5, 1.0 / 3.0, 1.0 / 6.0})).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(smax.sharpe == Approx(std::sqrt(14.0)).epsilon(1e-12));
  CHECK(diag::diag_pstar(a) == Approx(7.0 / 3.0).epsilon(1e-14));
  CHECK(diag::diag_smax(a) == Approx(std::sqrt(14.0)).epsilon(1e-14));

  const auto one = diag::min_vol_fixed_pnl_diag(AlphaSet(vec({0.3}), vec({1})), 0.3);
  CHECK(one.weights(0) == 1.0);
}

TEST_CASE("minimum volatility rejects targets outside the range") {
  const AlphaSet a = fixture();
  try {
    (void)diag::min_vol_fixed_pnl_diag(a, 3.1);
    FAIL("expected InfeasibleTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleTarget);
  }
  try {
    (void)diag::min_vol_fixed_pnl_diag(a, 2.0);
    FAIL("expected BelowSharpeMaxPnl");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BelowSharpeMaxPnl);
  }
}

TEST_CASE("minimum volatility matches exhaustive search and stationarity") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 150; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 5);
    const AlphaSet a = random_diag(n, rng);
    const double ps = diag::diag_pstar(a), pm = a.alphas().maxCoeff();
    std::uniform_real_distribution<double> u(ps, ps + 0.95 * (pm - ps));
    const double p = u(rng);
    const auto sol = diag::min_vol_fixed_pnl_diag(a, p);
    const MatrixXd c = a.vols().array().square().matrix().asDiagonal();
    const auto ref = reference_min(a.alphas(), c, p);
    REQUIRE(ref.has_value());
    CHECK(sol.risk == Approx(std::sqrt(ref->r2)).epsilon(1e-9));
    CHECK((sol.weights - ref->w).cwiseAbs().maxCoeff() < 1e-8);

    // On J the scaled weights sigma_i w_i lie in span(alpha_hat, nu); on J' the
    // threshold inequality holds the other way.
    const auto st = diag::select_support(a, p);
    const VectorXd ah = a.alpha_hat(), nu = a.nu();
    MatrixXd basis(st.K, 2);
    VectorXd hw(st.K);
    for (Index k = 0; k < st.K; ++k) {
      const Index i = st.order[static_cast<std::size_t>(k)];
      basis(k, 0) = ah(i);
      basis(k, 1) = nu(i);
      hw(k) = a.vols()(i) * sol.weights(i);
    }
    if (st.K >= 2) {
      const VectorXd coef = basis.colPivHouseholderQr().solve(hw);
      CHECK((basis * coef - hw).cwiseAbs().maxCoeff() < 1e-10);
    }
    for (Index k = st.K; k < n; ++k) {
      const Index i = st.order[static_cast<std::size_t>(k)];
      CHECK(sol.weights(i) == 0.0);
      CHECK(-st.mu_tilde * a.alphas()(i) <= st.mu + 1e-12);
    }
  }
}

TEST_CASE("Sharpe-targeted diagonal solutions on the worked fixture") {
  const AlphaSet a = fixture();
  const auto top = diag::sharpe_target_diag(a, std::sqrt(14.0));
  CHECK(top.pnl == Approx(7.0 / 3.0).epsilon(1e-9));
  CHECK((top.weights - vec({0.5, 1.0 / 3.0, 1.0 / 6.0})).cwiseAbs().maxCoeff() < 1e-8);

  const double s28 = 2.8 / std::sqrt(0.68);
  const auto mid = diag::sharpe_target_diag(a, s28);
  CHECK(mid.pnl == Approx(2.8).epsilon(1e-9));
  CHECK((mid.weights - vec({0.8, 0.2, 0.0})).cwiseAbs().maxCoeff() < 1e-8);

  const auto one = diag::sharpe_target_diag(a, 3.0);
  CHECK((one.weights - vec({1, 0, 0})).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(one.pnl == Approx(3.0));
}

TEST_CASE("sphere search on the worked fixture") {
  const AlphaSet a = fixture();
  diag::SphereSearchState st;
  const auto sol = diag::sphere_optimal(a, 3.3, &st);
  const auto quasi = diag::quasi_optimal(a, 3.3);
  CHECK(sol.sharpe == Approx(3.3).epsilon(1e-9));
  CHECK(sol.pnl >= quasi.pnl - 1e-12);
  CHECK(st.r == Approx(std::sqrt(14.0 / (3.3 * 3.3) - 1.0)).epsilon(1e-12));
  const auto tgt = diag::sharpe_target_diag(a, 3.3);
  CHECK((sol.weights - tgt.weights).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sphere search on two streams matches the pnl bisection") {
  const AlphaSet a(vec({2, 1}), vec({1, 1}));
  const auto sol = diag::sphere_optimal(a, 2.1);
  // Bisect P on the exhaustive minimum-volatility solution until S = 2.1.
  const MatrixXd c = MatrixXd::Identity(2, 2);
  double lo = diag::diag_pstar(a), hi = 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto r = reference_min(a.alphas(), c, mid);
    (r && mid / std::sqrt(r->r2) >= 2.1 ? lo : hi) = mid;
  }
  const auto ref = reference_min(a.alphas(), c, lo);
  REQUIRE(ref.has_value());
  CHECK((sol.weights - ref->w).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sol.pnl == Approx(lo).epsilon(1e-9));
}

TEST_CASE("sphere search limits and errors") {
  const AlphaSet a = fixture();
  const auto near = diag::sphere_optimal(a, std::sqrt(14.0) * (1.0 - 1e-12));
  CHECK((near.weights - vec({0.5, 1.0 / 3.0, 1.0 / 6.0})).cwiseAbs().maxCoeff() < 1e-5);
  try {
    (void)diag::sphere_optimal(a, 4.0);
    FAIL("expected InfeasibleSharpe");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleSharpe);
  }
}

TEST_CASE("sphere and pnl-bisection solutions agree and dominate quasi-optimal") {
  std::mt19937_64 rng(29);
  int strictly_better = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 12);
    const AlphaSet a = random_diag(n, rng);
    const double smax = diag::diag_smax(a), top = a.alpha_hat().maxCoeff();
    std::uniform_real_distribution<double> u(top + 0.01 * (smax - top), smax - 0.01 * (smax - top));
    const double s = u(rng);
    const auto sp = diag::sphere_optimal(a, s);
    const auto tg = diag::sharpe_target_diag(a, s);
    const auto qo = diag::quasi_optimal(a, s);
    CHECK((sp.weights - tg.weights).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(sp.pnl >= qo.pnl - 1e-12);
    CHECK(tg.pnl >= qo.pnl - 1e-12);
    CHECK(sharpe_diag(a, sp.weights) == Approx(s).epsilon(1e-8));
    if (sp.pnl > qo.pnl + 1e-9) ++strictly_better;
  }
  CHECK(strictly_better > 0);
}

TEST_CASE("sphere search when only the top two streams stay active") {
  // Start value sits on the edge of the admissible beta1 range.
  const VectorXd alpha = vec({0.054631306444145766, 0.43986269688822233, 0.4002303460157341, 0.78095787875578804,
                              0.82074268812985385, 0.82142980921845243, 0.18252776517472946, 0.088881793750125601,
                              0.73955035090327337, 0.45356982018008479, 0.14960320692567919, 0.11340997643090504,
                              0.17556609279058072, 0.77395400608945319, 0.38601817319091103});
  const VectorXd sigma = vec({1.5987366185868475, 1.6144116069986705, 0.92671104269772264, 1.6304302243871645,
                              1.7619006295575597, 1.8493340984760249, 0.74499961974193596, 0.72805930634903016,
                              1.3788761126859539, 1.0841094585892801, 1.8128864963600573, 0.97200507990464924,
                              0.87342865320380336, 1.5543035481563368, 1.1836730419656389});
  const AlphaSet a(alpha, sigma);
  const double s = 0.60266904695364398;
  const auto sp = diag::sphere_optimal(a, s);
  const auto tg = diag::sharpe_target_diag(a, s);
  CHECK((sp.weights - tg.weights).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sp.support == std::vector<Index>{4, 5});
}
