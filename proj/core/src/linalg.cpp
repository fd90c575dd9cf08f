#include "stagesens/linalg.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace stagesens {

std::optional<Eigen::LLT<Matrix>> cholesky(const Matrix& a) {
  if (a.rows() != a.cols() || !a.allFinite()) {
    return std::nullopt;
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    return std::nullopt;
  }
  const auto diag = llt.matrixLLT().diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite()) {
    return std::nullopt;
  }
  return llt;
}

double log_determinant(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double mvn_logpdf(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& llt) {
  const Vector z = llt.matrixL().solve(x - mean);
  const double k = static_cast<double>(x.size());
  return -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_determinant(llt) + z.squaredNorm());
}

double log_multivariate_gamma(int p, double a) {
  double value = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= p; ++j) {
    value += std::lgamma(a + 0.5 * (1 - j));
  }
  return value;
}

double inverse_wishart_logpdf(const Matrix& sigma, const Matrix& scale, double df) {
  const auto llt = cholesky(sigma);
  if (!llt) {
    return -std::numeric_limits<double>::infinity();
  }
  const auto scale_llt = cholesky(scale);
  const int p = static_cast<int>(sigma.rows());
  const double trace = (llt->solve(scale)).trace();
  return 0.5 * df * log_determinant(*scale_llt) - 0.5 * df * p * std::numbers::ln2 -
         log_multivariate_gamma(p, 0.5 * df) - 0.5 * (df + p + 1) * log_determinant(*llt) -
         0.5 * trace;
}

Matrix sample_inverse_wishart(const Matrix& scale, double df, Rng& rng) {
  const Eigen::Index p = scale.rows();
  // Precision ~ Wishart(scale^{-1}, df) = L A A' L' with L L' = scale^{-1}.
  const Matrix scale_inv = scale.llt().solve(Matrix::Identity(p, p));
  const Matrix l = scale_inv.llt().matrixL();
  Matrix a = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) {
      a(i, j) = rng.normal();
    }
  }
  const Matrix b = l * a;  // lower triangular
  const Matrix b_inv = b.triangularView<Eigen::Lower>().solve(Matrix::Identity(p, p));
  Matrix sigma = b_inv.transpose() * b_inv;
  return 0.5 * (sigma + sigma.transpose());
}

Vector sample_mvn_precision(const Vector& mean, const Eigen::LLT<Matrix>& precision_llt, Rng& rng) {
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z(i) = rng.normal();
  }
  // precision = U'U with U = L'; x = mean + U^{-1} z has covariance precision^{-1}.
  return mean + precision_llt.matrixU().solve(z);
}

Vector sample_mvn(const Vector& mean, const Eigen::LLT<Matrix>& cov_llt, Rng& rng) {
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z(i) = rng.normal();
  }
  return mean + cov_llt.matrixL() * z;
}

}  // namespace stagesens
