#include "alphamix/synthetic.hpp"

#include <Eigen/Eigenvalues>

namespace alphamix::synthetic {

SyntheticBasis synthetic_portfolios(const AlphaSet& alpha, const CovarianceModel& cov) {
  const MatrixXd& c = cov.as_dense().matrix();
  const Index n = c.rows();
  if (alpha.size() != n) throw Error(ErrorCode::DimensionMismatch, "alphas and covariance differ in size");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(c);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();
  if (ev(0) < 1e-10 * ev(n - 1)) throw Error(ErrorCode::IllConditioned, "eigenvalue below 1e-10 of the largest");

  SyntheticBasis out;
  out.portfolio_weights.resize(n, n);
  out.synthetic_alphas.resize(n);
  out.synthetic_vars.resize(n);
  out.eigenvalues.resize(n);
  out.degenerate_alpha.assign(static_cast<std::size_t>(n), false);
  const double alpha_scale = alpha.alphas().cwiseAbs().maxCoeff();
  for (Index a = 0; a < n; ++a) {
    const Index src = n - 1 - a;
    VectorXd v = es.eigenvectors().col(src);
    const double l1 = v.lpNorm<1>();
    VectorXd w = v / l1;
    double syn = w.dot(alpha.alphas());
    if (std::abs(syn) <= 1e-12 * alpha_scale) {
      out.degenerate_alpha[static_cast<std::size_t>(a)] = true;
      syn = 0.0;
      Index big = 0;
      w.cwiseAbs().maxCoeff(&big);
      if (w(big) < 0.0) w = -w;
    } else if (syn < 0.0) {
      w = -w;
      syn = -syn;
    }
    out.portfolio_weights.row(a) = w.transpose();
    out.synthetic_alphas(a) = syn;
    out.synthetic_vars(a) = ev(src) / (l1 * l1);
    out.eigenvalues(a) = ev(src);
  }
  return out;
}

}  // namespace alphamix::synthetic
