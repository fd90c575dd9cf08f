#pragma once

// Dense linear-algebra helpers for the random-effects layer.

#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "stagesens/rng.hpp"

namespace stagesens {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Cholesky factor of a symmetric matrix, or nullopt unless it is
/// numerically positive definite.
std::optional<Eigen::LLT<Matrix>> cholesky(const Matrix& a);

double log_determinant(const Eigen::LLT<Matrix>& llt);

/// Multivariate normal log-density with normalizing constant.
double mvn_logpdf(const Vector& x, const Vector& mean, const Eigen::LLT<Matrix>& llt);

/// Log of the multivariate gamma function Gamma_p(a).
double log_multivariate_gamma(int p, double a);

/// Inverse-Wishart log-density with normalizing constant:
/// |S|^{-(df+p+1)/2} exp(-tr(scale S^{-1})/2). Returns -inf unless `sigma` is
/// positive definite.
double inverse_wishart_logpdf(const Matrix& sigma, const Matrix& scale, double df);

/// Draw from the Inverse-Wishart with the same parameterization (Bartlett
/// decomposition of the Wishart on the precision).
Matrix sample_inverse_wishart(const Matrix& scale, double df, Rng& rng);

/// Draw from N(mean, precision^{-1}) given the Cholesky factor of the
/// precision matrix.
Vector sample_mvn_precision(const Vector& mean, const Eigen::LLT<Matrix>& precision_llt, Rng& rng);

Vector sample_mvn(const Vector& mean, const Eigen::LLT<Matrix>& cov_llt, Rng& rng);

}  // namespace stagesens
