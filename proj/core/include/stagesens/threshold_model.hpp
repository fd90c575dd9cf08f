#pragma once

// Hierarchical model for continuous tests reported at multiple thresholds.
//
// In study i the test result of state j follows a logistic distribution with
// location mu_ij and scale exp(logsigma_ij) on the Box-Cox scale, so the
// test-positive probability at threshold C is
//   inverse_logit((mu_ij - boxcox(C, lambda)) / exp(logsigma_ij)).
// The 2K-vector (mu_i, logsigma_i) is N(m, Sigma) with Sigma restricted by a
// covariance structure. Counts along thresholds form conditional-binomial
// chains.
//
// Six model versions are supported:
//   V1  full Sigma, IW(I, 2K)                              Box-Cox lambda
//   V2  location and scale blocks, IW(I, K) each           Box-Cox lambda
//   V3  as V2                                              log link (lambda = 0)
//   V4  location block IW(I, K), independent scale SDs      Box-Cox lambda
//   V5  all SDs independent                                Box-Cox lambda
//   V6  as V4 with ordered stage locations and one shared stage scale mean
// Independent standard deviations get half-Normal(0, 2) priors.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stagesens/linalg.hpp"
#include "stagesens/model.hpp"

namespace stagesens {

enum class CovarianceForm { full, blocks, location_block, independent };
enum class ThresholdLink { boxcox, log };
enum class LocationConstraint { none, ordered };

struct CovStructure {
  CovarianceForm form = CovarianceForm::full;
  ThresholdLink link = ThresholdLink::boxcox;
  LocationConstraint constraint = LocationConstraint::none;

  /// Structure of model version 1..6; throws std::invalid_argument otherwise.
  static CovStructure version(int v);
  /// Version number of this combination; throws std::invalid_argument if it
  /// is not one of the six versions.
  int version_number() const;
  bool estimates_lambda() const noexcept { return link == ThresholdLink::boxcox; }
  bool ordered() const noexcept { return constraint == LocationConstraint::ordered; }

  friend bool operator==(const CovStructure&, const CovStructure&) = default;
};

struct ThresholdPriors {
  double m_mean = 0.0;
  double m_variance = 100.0;
  double half_normal_scale = 2.0;
};

struct ThresholdParams {
  Vector m;         // 2K: locations then log-scales, disease-free first
  Matrix sigma;     // 2K x 2K, zero outside the structure
  Matrix mu;        // studies x K
  Matrix logsigma;  // studies x K
  double lambda = 0.0;
  std::vector<double> q;
};

/// A group of coordinates of (mu, logsigma) sharing one covariance prior:
/// either a correlated block with an Inverse-Wishart prior or a single
/// coordinate with a half-Normal prior on its standard deviation.
struct CovGroup {
  bool wishart = true;
  std::vector<int> coords;
  std::string name;
};

class ThresholdModel final : public HierarchicalModel {
 public:
  ThresholdModel(const Dataset& d, CovStructure cov, ThresholdPriors priors = {});

  const CompiledData& data() const noexcept override { return data_; }
  const CovStructure& structure() const noexcept { return cov_; }
  const ThresholdPriors& priors() const noexcept { return priors_; }
  const std::vector<CovGroup>& groups() const noexcept { return groups_; }

  std::vector<std::string> parameter_names() const override;
  std::vector<mcmc::BlockSpec> proposal_blocks() const override;
  std::unique_ptr<mcmc::ChainKernel> start_chain(Rng& rng) const override;
  double log_posterior(std::span<const double> params) const override;
  std::vector<std::string> support_violations(std::span<const double> params) const override;

  double log_likelihood(std::span<const double> params) const override;
  std::vector<double> series_deviance(std::span<const double> params) const override;
  std::vector<std::vector<double>> positive_probabilities(
      std::span<const double> params, std::span<const double> grid) const override;
  std::string label() const override;

  std::size_t parameter_count() const noexcept;
  ThresholdParams unpack(std::span<const double> flat) const;
  std::vector<double> pack(const ThresholdParams& p) const;

  LogPosteriorTerms terms(const ThresholdParams& p) const;
  /// Prior log-density of m alone (including truncation under V6).
  double m_log_prior(const Vector& m) const;
  /// Prior log-density of the covariance parameters.
  double sigma_log_prior(const Matrix& sigma) const;

  /// Box-Cox transformed thresholds of a series.
  std::vector<double> transformed_thresholds(std::size_t series, double lambda) const;
  double series_loglik(std::size_t series, const ThresholdParams& p,
                       std::span<const double> transformed) const;
  double series_loglik(std::size_t series, const ThresholdParams& p) const;

  const std::vector<std::size_t>& series_touching(std::size_t study, int state) const {
    return touching_[study][static_cast<std::size_t>(state)];
  }
  const std::vector<std::size_t>& series_with_q(std::size_t slot) const { return q_series_[slot]; }

  /// Flat offsets of the layout blocks.
  struct Layout {
    std::size_t m = 0;
    std::size_t cov = 0;
    std::size_t latent = 0;
    std::size_t lambda = 0;  // equals q when lambda is fixed
    std::size_t q = 0;
    std::size_t size = 0;
  };
  const Layout& layout() const noexcept { return layout_; }

  /// Coordinates of m translated jointly with the matching latent
  /// coordinates of every study by one sampler block.
  struct ShiftGroup {
    std::vector<int> coords;
    std::string name;
  };
  std::vector<ShiftGroup> shift_groups() const;

 private:
  CompiledData data_;
  CovStructure cov_;
  ThresholdPriors priors_;
  std::vector<CovGroup> groups_;
  Layout layout_;
  std::vector<std::vector<std::vector<std::size_t>>> touching_;
  std::vector<std::vector<std::size_t>> q_series_;
};

double log_posterior_threshold(const ThresholdParams& p, const Dataset& d, const CovStructure& cov,
                               const ThresholdPriors& priors = {});

/// Test-positive probability of each state (rows) at each threshold of
/// `grid` (columns) for hyperparameters m (locations then log-scales).
/// Row 0 is the false-positive fraction; specificity is one minus it.
std::vector<std::vector<double>> summary_curves(std::span<const double> m, double lambda,
                                                std::span<const double> grid);

}  // namespace stagesens
