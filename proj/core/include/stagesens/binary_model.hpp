#pragma once

// Hierarchical model for binary tests.
//
// Study i has a latent logit test-positive probability eta_ij for every state
// j = 0..J, drawn from N(m, Sigma). Stage-specific records are binomial in
// inverse_logit(eta_ij); overall and merged records are binomial in a mixture
// of the per-stage probabilities (see likelihood.hpp for the routing).
//
// Priors: m_j ~ Logistic(0, 1) (uniform on the probability scale),
// Sigma ~ Inverse-Wishart(I, K), latent overlap shares q ~ Uniform(0, 1).

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stagesens/linalg.hpp"
#include "stagesens/model.hpp"

namespace stagesens {

struct BinaryParams {
  Vector m;      // K random-effect means, disease-free first
  Matrix sigma;  // K x K
  Matrix eta;    // studies x K latent logits
  std::vector<double> q;
};

struct BinaryPriors {
  double m_location = 0.0;
  double m_scale = 1.0;
  /// Inverse-Wishart degrees of freedom; 0 selects K.
  double wishart_df = 0.0;
};

double logistic_logpdf(double x, double location, double scale) noexcept;

class BinaryModel final : public HierarchicalModel {
 public:
  explicit BinaryModel(const Dataset& d, BinaryPriors priors = {});

  const CompiledData& data() const noexcept override { return data_; }
  const BinaryPriors& priors() const noexcept { return priors_; }
  double wishart_df() const noexcept;

  std::vector<std::string> parameter_names() const override;
  std::vector<mcmc::BlockSpec> proposal_blocks() const override;
  std::unique_ptr<mcmc::ChainKernel> start_chain(Rng& rng) const override;
  double log_posterior(std::span<const double> params) const override;
  std::vector<std::string> support_violations(std::span<const double> params) const override;

  double log_likelihood(std::span<const double> params) const override;
  std::vector<double> series_deviance(std::span<const double> params) const override;
  std::vector<std::vector<double>> positive_probabilities(
      std::span<const double> params, std::span<const double> grid) const override;
  std::string label() const override { return "binary"; }

  std::size_t parameter_count() const noexcept;
  BinaryParams unpack(std::span<const double> flat) const;
  std::vector<double> pack(const BinaryParams& p) const;

  LogPosteriorTerms terms(const BinaryParams& p) const;
  double series_loglik(std::size_t series, const BinaryParams& p) const;

  /// Series of `study` whose mixture involves `state`.
  const std::vector<std::size_t>& series_touching(std::size_t study, int state) const {
    return touching_[study][static_cast<std::size_t>(state)];
  }
  /// Series whose mixture uses latent share `slot`.
  const std::vector<std::size_t>& series_with_q(std::size_t slot) const { return q_series_[slot]; }

 private:
  CompiledData data_;
  BinaryPriors priors_;
  std::vector<std::vector<std::vector<std::size_t>>> touching_;
  std::vector<std::vector<std::size_t>> q_series_;
};

/// Log-posterior of a binary dataset at the given parameters.
double log_posterior_binary(const BinaryParams& p, const Dataset& d, const BinaryPriors& priors = {});

struct BinaryAccuracy {
  double specificity = 0.0;
  std::vector<double> sensitivity;  // stages 1..J
};

/// specificity = 1 - inverse_logit(m_0), sensitivity_j = inverse_logit(m_j).
BinaryAccuracy summary_accuracy_binary(std::span<const double> m);

}  // namespace stagesens
