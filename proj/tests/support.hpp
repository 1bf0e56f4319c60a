#pragma once

// Shared generators and a reference solver for the tests. The reference solver
// enumerates sign patterns like the library oracle, but solves the bordered
// Lagrange system for each pattern directly instead of the closed form.

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "alphamix/core.hpp"

namespace testing_support {

using alphamix::Index;
using alphamix::MatrixXd;
using alphamix::VectorXd;

inline MatrixXd random_pd(Index n, std::mt19937_64& rng, double ridge = 0.2) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = g(rng);
  MatrixXd c = a * a.transpose() / static_cast<double>(n) + ridge * MatrixXd::Identity(n, n);
  return 0.5 * (c + c.transpose());
}

inline VectorXd random_vector(Index n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline VectorXd random_signed_alpha(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

struct RandomFactor {
  VectorXd xi2;
  MatrixXd loadings;
  MatrixXd phi;
};

inline RandomFactor random_factor(Index n, Index f, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  RandomFactor out;
  out.xi2 = random_vector(n, rng, 0.5, 1.5);
  out.loadings.resize(n, f);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < f; ++a) out.loadings(i, a) = 0.5 * g(rng);
  MatrixXd b(f, f);
  for (Index i = 0; i < f; ++i)
    for (Index j = 0; j < f; ++j) b(i, j) = g(rng);
  out.phi = b * b.transpose() / static_cast<double>(std::max<Index>(f, 1)) + 0.5 * MatrixXd::Identity(f, f);
  return out;
}

struct Reference {
  VectorXd w;
  double r2 = std::numeric_limits<double>::infinity();
  double mu = 0.0;
  double mu_tilde = 0.0;
};

/// Minimum of w'Cw subject to sum |w| = 1 and sum (a_i - l_i |sign w_i|) w_i = p, by
/// brute force over sign patterns. Each pattern solves
///   [C_J  eta  abar] [w ]   [0]
///   [eta'  0    0  ] [mu] = [1]
///   [abar' 0    0  ] [mt]   [p]
/// and is kept if the recovered signs match eta.
inline std::optional<Reference> reference_min(const VectorXd& a, const MatrixXd& c, double p,
                                              const VectorXd* costs = nullptr) {
  const Index n = a.size();
  long total = 1;
  for (Index i = 0; i < n; ++i) total *= 3;
  std::optional<Reference> best;
  for (long code = 0; code < total; ++code) {
    std::vector<Index> j;
    std::vector<int> eta;
    long rest = code;
    for (Index i = 0; i < n; ++i) {
      const int s = static_cast<int>(rest % 3) - 1;
      rest /= 3;
      if (s != 0) {
        j.push_back(i);
        eta.push_back(s);
      }
    }
    if (j.empty()) continue;
    const Index m = static_cast<Index>(j.size());
    VectorXd w(m);
    if (m == 1) {
      const double ab = a(j[0]) - (costs ? (*costs)(j[0]) * eta[0] : 0.0);
      if (std::abs(eta[0] * ab - p) > 1e-10 * std::max(1.0, std::abs(p))) continue;
      w(0) = eta[0];
    } else {
      MatrixXd k = MatrixXd::Zero(m + 2, m + 2);
      VectorXd rhs = VectorXd::Zero(m + 2);
      for (Index r = 0; r < m; ++r) {
        for (Index s = 0; s < m; ++s) k(r, s) = c(j[r], j[s]);
        const double ab = a(j[r]) - (costs ? (*costs)(j[r]) * eta[r] : 0.0);
        k(r, m) = k(m, r) = eta[r];
        k(r, m + 1) = k(m + 1, r) = ab;
      }
      rhs(m) = 1.0;
      rhs(m + 1) = p;
      Eigen::FullPivLU<MatrixXd> lu(k);
      if (!lu.isInvertible()) continue;
      const VectorXd x = lu.solve(rhs);
      if ((k * x - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) continue;
      w = x.head(m);
    }
    bool ok = true;
    for (Index r = 0; r < m && ok; ++r) ok = w(r) * eta[r] > 0.0;
    if (!ok) continue;
    VectorXd full = VectorXd::Zero(n);
    for (Index r = 0; r < m; ++r) full(j[r]) = w(r);
    const double r2 = full.dot(c * full);
    if (!best || r2 < best->r2) best = Reference{full, r2, 0.0, 0.0};
  }
  return best;
}

/// Sharpe-maximizing weights C^-1 alpha normalized to unit L1 norm.
inline VectorXd reference_smax_weights(const VectorXd& a, const MatrixXd& c) {
  const VectorXd x = c.ldlt().solve(a);
  return x / x.lpNorm<1>();
}

}  // namespace testing_support
