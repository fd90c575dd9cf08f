#pragma once

// Adaptive Metropolis-within-Gibbs engine.
//
// A model supplies a parameter layout, its Metropolis proposal blocks and a
// per-chain kernel that performs one sweep over all blocks. The engine owns
// everything that is model independent: per-chain random streams, proposal
// scale adaptation during burn-in, thinning, storage and the multi-chain
// merge.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stagesens/rng.hpp"

namespace stagesens::mcmc {

struct SamplerConfig {
  int chains = 4;
  /// Total iterations per chain, burn-in included.
  int iterations = 25000;
  int burn_in = 5000;
  int thin = 4;
  std::uint64_t seed = 20240917;
  /// Iterations between proposal-scale updates during burn-in.
  int adapt_window = 50;
  double target_accept_scalar = 0.44;
  double target_accept_vector = 0.23;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  int stored_per_chain() const noexcept { return (iterations - burn_in) / thin; }
};

struct BlockSpec {
  std::string name;
  /// Number of coordinates moved jointly; selects the acceptance target.
  int dimension = 1;
  double initial_scale = 1.0;
};

/// Mutable sampler state of one proposal block.
struct ProposalBlock {
  double log_scale = 0.0;
  double target = 0.44;
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;
  std::int64_t window_proposed = 0;
  std::int64_t window_accepted = 0;
};

class SamplerFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Engine-side state of one chain, handed to the model kernel each sweep.
class ChainState {
 public:
  ChainState(std::uint64_t seed, int chain, const std::vector<BlockSpec>& blocks,
             const SamplerConfig& cfg);

  Rng& rng() noexcept { return rng_; }
  int chain() const noexcept { return chain_; }

  /// Random-walk increment for a block: scale * N(0, 1).
  double step(std::size_t block);
  double scale(std::size_t block) const;

  /// Metropolis accept/reject for a proposal with the given log acceptance
  /// ratio. NaN ratios are rejected.
  bool accept(std::size_t block, double log_ratio);

  /// Robbins-Monro update of every scale from the last window's acceptance.
  void adapt();
  /// Clears the counters; called at the end of burn-in so that acceptance
  /// reports cover stored iterations only.
  void reset_counters();

  const std::vector<ProposalBlock>& blocks() const noexcept { return blocks_; }

 private:
  Rng rng_;
  int chain_ = 0;
  std::vector<ProposalBlock> blocks_;
  int adaptations_ = 0;
};

class ChainKernel {
 public:
  virtual ~ChainKernel() = default;
  virtual void sweep(ChainState& state) = 0;
  /// Writes the current iterate in the model's flat layout.
  virtual void write(std::span<double> out) const = 0;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::vector<std::string> parameter_names() const = 0;
  virtual std::vector<BlockSpec> proposal_blocks() const = 0;
  /// Builds a chain at a (jittered) starting point drawn from `rng`.
  virtual std::unique_ptr<ChainKernel> start_chain(Rng& rng) const = 0;
  virtual double log_posterior(std::span<const double> params) const = 0;
  /// Names the invariants a flat parameter vector breaks; empty when it lies
  /// in the support.
  virtual std::vector<std::string> support_violations(std::span<const double> params) const;
};

struct BlockAcceptance {
  std::string name;
  double rate = 0.0;
  double scale = 0.0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  int chains = 0;
  int draws_per_chain = 0;
  /// Chain-major rows: draw d of chain c is row c * draws_per_chain + d.
  Eigen::MatrixXd values;
  /// Post-burn-in acceptance per chain and block.
  std::vector<std::vector<BlockAcceptance>> acceptance;

  std::size_t draw_count() const noexcept { return static_cast<std::size_t>(values.rows()); }
  /// Column index of a parameter; throws std::out_of_range.
  std::size_t index_of(std::string_view name) const;
  /// Draws of one parameter for one chain.
  std::vector<double> chain_column(int chain, std::size_t column) const;
};

/// Runs every chain (concurrently, one thread each) and merges the draws.
/// Chain c depends only on (cfg.seed, c).
PosteriorDraws run(const Model& model, const SamplerConfig& cfg);

/// Average post-burn-in acceptance rate of each block over chains.
std::vector<BlockAcceptance> mean_acceptance(const PosteriorDraws& draws);

/// A model defined by an arbitrary log-density over R^d, updated one
/// coordinate at a time with full re-evaluation. Used for small targets.
class DensityModel final : public Model {
 public:
  using LogDensity = std::function<double(std::span<const double>)>;

  DensityModel(std::vector<std::string> names, std::vector<double> start, LogDensity log_density,
               double jitter = 0.1);

  std::vector<std::string> parameter_names() const override { return names_; }
  std::vector<BlockSpec> proposal_blocks() const override;
  std::unique_ptr<ChainKernel> start_chain(Rng& rng) const override;
  double log_posterior(std::span<const double> params) const override {
    return log_density_(params);
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> start_;
  LogDensity log_density_;
  double jitter_;
};

}  // namespace stagesens::mcmc
