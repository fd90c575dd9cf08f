#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stagesens {

/// Name of the generator recorded in run manifests.
inline constexpr std::string_view kRngAlgorithm =
    "std::mt19937_64 per stream, seeded with splitmix64(seed, stream)";

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Random source for one independent stream (one MCMC chain, one simulated
/// dataset). Streams depend only on (seed, stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  double normal(double mean, double sd);
  double logistic();
  double gamma(double shape);
  double chi_squared(double df);
  std::int64_t binomial(std::int64_t trials, double p);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace stagesens
