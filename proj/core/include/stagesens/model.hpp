#pragma once

// Common surface of the two hierarchical models, as used by posterior
// summaries and the command-line front end.

#include <span>
#include <string>
#include <vector>

#include "stagesens/likelihood.hpp"
#include "stagesens/sampler.hpp"

namespace stagesens {

/// Components of a log-posterior value.
struct LogPosteriorTerms {
  double log_likelihood = 0.0;
  double random_effects = 0.0;
  double prior = 0.0;

  double total() const noexcept { return log_likelihood + random_effects + prior; }
};

class HierarchicalModel : public mcmc::Model {
 public:
  virtual const CompiledData& data() const noexcept = 0;
  int stages() const noexcept { return data().stages; }
  int states() const noexcept { return data().stages + 1; }

  /// Data log-likelihood of a flat parameter vector.
  virtual double log_likelihood(std::span<const double> params) const = 0;

  /// Residual deviance 2 * (saturated log-likelihood - log-likelihood).
  double deviance(std::span<const double> params) const;

  /// Per-series residual deviance contributions, in `data().series` order.
  virtual std::vector<double> series_deviance(std::span<const double> params) const = 0;

  /// Test-positive probability of each state (rows) at each grid threshold
  /// (columns) implied by the hyperparameters of a draw. Binary models ignore
  /// the grid and return one column.
  virtual std::vector<std::vector<double>> positive_probabilities(
      std::span<const double> params, std::span<const double> grid) const = 0;

  /// Model label for reports, e.g. "binary" or "threshold V4".
  virtual std::string label() const = 0;
};

}  // namespace stagesens
