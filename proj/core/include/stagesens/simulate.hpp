#pragma once

// Artificial datasets: binary tests under three noise scenarios and
// continuous tests at multiple thresholds, each returned as an ideal
// (all stage-specific) view and an observed view in which most studies only
// report counts aggregated over disease stages.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "stagesens/data_model.hpp"
#include "stagesens/linalg.hpp"

namespace stagesens {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

struct BinarySimSpec {
  int studies = 20;
  /// True test-positive probabilities, disease-free first (K = J + 1 entries).
  std::vector<double> probabilities{0.05, 0.70, 0.80, 0.95};
  /// Random-effect variances on the logit scale.
  std::vector<double> variances{0.05, 0.2, 0.3, 0.6};
  double correlation = 0.3;
  /// 'a', 'b' or 'c'.
  char scenario = 'a';
  /// The first `stage_specific` studies keep their stage-specific records.
  int stage_specific = 4;
  std::uint64_t seed = 1;

  int stages() const noexcept { return static_cast<int>(probabilities.size()) - 1; }
  /// Binomial variance targets of stage-specific and of overall studies.
  Range stage_specific_variance() const;
  Range overall_variance() const;
  Matrix covariance() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct ContinuousSimSpec {
  int studies = 30;
  /// Location means then log-scale means, disease-free first (2K entries).
  std::vector<double> m{0.81, 1.62, 2.56, 5.20, 0.19, 0.25, 0.39, 0.43};
  std::vector<double> variances{0.1, 0.2, 0.3, 0.4, 0.01, 0.05, 0.08, 0.1};
  double location_correlation = 0.6;
  double scale_correlation = 0.1;
  double location_scale_correlation = 0.15;
  IntRange thresholds_per_study{1, 10};
  Range threshold_range{5.0, 150.0};
  IntRange disease_free_total{200, 700};
  IntRange diseased_total{5, 50};
  /// "I": stage-specific studies report a single threshold for every stage
  /// except the most advanced; "II": full reporting.
  std::string scenario = "I";
  int stage_specific = 5;
  std::uint64_t seed = 1;

  int stages() const noexcept { return static_cast<int>(m.size()) / 2 - 1; }
  Matrix covariance() const;
  void validate() const;
};

using SimSpec = std::variant<BinarySimSpec, ContinuousSimSpec>;

struct Simulation {
  Dataset ideal;
  Dataset observed;
  std::vector<std::string> stage_specific_ids;
  std::vector<std::string> overall_ids;
  Vector mean;
  Matrix covariance;
  /// Study-level effects (rows in study order): logits for binary tests,
  /// locations then log-scales for continuous tests.
  Matrix effects;
};

Simulation simulate_binary(const BinarySimSpec& spec);
Simulation simulate_continuous(const ContinuousSimSpec& spec);
Simulation simulate(const SimSpec& spec);

/// Sample size giving a binomial variance of `variance` at probability p:
/// round(variance / (p (1 - p))), at least 1.
std::int64_t solve_sample_size(double variance, double p);

/// Reads a JSON spec; "kind" selects "binary" or "continuous" and omitted
/// fields keep their defaults. Throws std::invalid_argument naming the field.
SimSpec read_sim_spec(std::istream& in);

/// Spec echo plus true parameter values.
void write_truth(std::ostream& out, const SimSpec& spec, const Simulation& sim);

}  // namespace stagesens
