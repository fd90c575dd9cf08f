#pragma once
// Brute-force reference computations for the test suite. Nothing here calls
// the production likelihoods; only the scalar links in transforms.hpp are
// shared.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

/// Every tolerance used to compare production code against an oracle.
struct Tolerances {
  /// Algebraic identities evaluated in floating point.
  static constexpr double exact = 1e-10;
  /// Enumerated probability mass must sum to one within this.
  static constexpr double normalization = 1e-9;
  /// KS distance between sampler draws and a quadrature posterior.
  static constexpr double stochastic = 0.02;
  /// Pointwise agreement of a grid posterior with a closed-form density.
  static constexpr double grid_density = 1e-6;
  /// Minimum KS p-value when a sampler should reproduce a known marginal.
  static constexpr double ks_pvalue = 0.01;
};

/// A conditional-binomial chain small enough to enumerate.
struct SmallInstance {
  std::int64_t total = 0;                // N <= 30
  std::vector<std::int64_t> positives;   // x_1 >= ... >= x_T, T <= 4
  std::vector<double> probs;             // S_1 > ... > S_T in (0, 1)
};

SmallInstance random_instance(std::mt19937_64& gen, int max_total = 30, int max_steps = 4);

/// Multinomial log-pmf of the interval counts (N - x_1, x_1 - x_2, ..., x_T)
/// with cell probabilities (1 - S_1, S_1 - S_2, ..., S_T).
double multinomial_chain_oracle(const SmallInstance& inst);

/// Calls `visit` with every admissible tuple N >= x_1 >= ... >= x_T >= 0.
void enumerate_chains(std::int64_t total, int steps,
                      const std::function<void(const std::vector<std::int64_t>&)>& visit);

/// log C(n, k) p^k (1-p)^(n-k) by direct product, for small n.
double binomial_logpmf_direct(std::int64_t x, std::int64_t n, double p);

/// Posterior of a scalar on (0, 1) evaluated on an evenly spaced interior grid
/// by the midpoint rule and normalized to integrate to one.
class GridPosterior {
 public:
  GridPosterior(const std::function<double(double)>& log_likelihood,
                const std::function<double(double)>& log_prior, int points = 10001);
  double density(double x) const;
  double cdf(double x) const;
  const std::vector<double>& grid() const noexcept { return grid_; }

 private:
  std::vector<double> grid_;
  std::vector<double> pdf_;
  std::vector<double> cdf_;  // cdf_[i] = mass below grid_[i] + width / 2
  double width_ = 0.0;
};

/// One-study, one-state binary posterior for S under a Beta(a, b) prior.
GridPosterior grid_posterior_oracle(std::int64_t positives, std::int64_t total,
                                    double prior_a = 1.0, double prior_b = 1.0,
                                    int points = 10001);

/// Kolmogorov-Smirnov distance of a sample from a continuous CDF.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);
/// Asymptotic p-value of the one-sample KS statistic with Stephens' small-n
/// correction.
double ks_pvalue(double distance, std::size_t n);

}  // namespace oracle
