#pragma once

// Binomial and conditional-binomial likelihood terms shared by the binary and
// multiple-threshold models, plus the routing of every reported series to a
// mixture over per-state test-positive probabilities.
//
// A series with counts x_1 >= ... >= x_T out of N at increasing thresholds is
// a chain x_1 ~ Bin(N, S_1), x_t ~ Bin(x_{t-1}, S_t / S_{t-1}). A binary
// record is a chain of length one. Merged records replace S_t by a mixture of
// the per-state probabilities.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stagesens/data_model.hpp"
#include "stagesens/transforms.hpp"

namespace stagesens {

double log_binomial_coefficient(std::int64_t n, std::int64_t k);

/// Binomial log-pmf with constants; p is clamped to [1e-12, 1 - 1e-12].
double binomial_logpmf(std::int64_t x, std::int64_t n, double p);

/// Binomial log-pmf from log(p) and log(1 - p), each clamped to the same
/// probability window as binomial_logpmf.
double binomial_logpmf_logs(std::int64_t x, std::int64_t n, double log_p, double log_q);

/// Log-likelihood of a conditional-binomial chain given the test-positive
/// probability at each threshold. Throws std::logic_error if S increases
/// along the chain.
double chain_logpmf(std::span<const std::int64_t> positives, std::int64_t total,
                    std::span<const double> probs);

/// Same chain, with the gaps supplied directly: gaps[0] = 1 - S_1 and
/// gaps[t] = S_{t-1} - S_t. Supplying gaps avoids cancellation.
double chain_logpmf(std::span<const std::int64_t> positives, std::int64_t total,
                    std::span<const double> probs, std::span<const double> gaps);

/// Chain log-likelihood at the saturated fit, where every (conditional)
/// binomial probability equals its observed proportion.
double saturated_chain_logpmf(std::span<const std::int64_t> positives, std::int64_t total);

// Binary records -----------------------------------------------------------

double loglik_stage_specific(std::int64_t positives, std::int64_t total, double sensitivity);

/// Overall record: success probability sum_j p_j S_j.
double loglik_overall(std::int64_t positives, std::int64_t total,
                      std::span<const double> proportions, std::span<const double> sensitivities);

/// Overlap record: success probability q S_1 + (1 - q) S_2.
double loglik_overlap(std::int64_t positives, std::int64_t total, double q, double s1, double s2);

// Multiple-threshold series ------------------------------------------------

double loglik_chain(const Series& series, std::span<const double> probs);

/// `stage_probs[j][t]` is S_{j+1,t}.
double loglik_overall_chain(const Series& series, std::span<const double> proportions,
                            const std::vector<std::vector<double>>& stage_probs);

double loglik_overlap_chain(const Series& series, double q, std::span<const double> s1,
                            std::span<const double> s2);

/// Overall series reported with overlap-grouped proportions:
/// Sall2_t = qov (q S_1t + (1 - q) S_2t) + p_adv S_3t.
double loglik_overall_type2_chain(const Series& series, double qov, double p_adv, double q,
                                  std::span<const double> s1, std::span<const double> s2,
                                  std::span<const double> s3);

// Routing -----------------------------------------------------------------

/// One component of a mixture over states. Its weight is `weight` times q
/// (or 1 - q when `complement`) when `q_slot` names a latent overlap share.
struct MixtureTerm {
  int state = 0;
  double weight = 1.0;
  int q_slot = -1;
  bool complement = false;
};

struct CompiledSeries {
  std::size_t study = 0;
  StateSet state = StateSet::all_stages();
  std::vector<MixtureTerm> mixture;
  std::vector<double> thresholds;
  std::vector<std::int64_t> positives;
  std::int64_t total = 0;
  double saturated_loglik = 0.0;
};

/// A validated dataset routed into likelihood terms.
struct CompiledData {
  int stages = 0;
  TestKind kind = TestKind::binary;
  std::vector<std::string> studies;
  std::vector<StudyRole> roles;
  std::vector<CompiledSeries> series;
  std::vector<std::vector<std::size_t>> series_of_study;
  /// Studies carrying a latent overlap share q, one slot each.
  std::vector<std::size_t> q_studies;
  /// Slot of each study, or -1.
  std::vector<int> q_slot_of_study;
  /// Smallest and largest threshold present (multi-threshold only).
  double min_threshold = 0.0;
  double max_threshold = 0.0;

  std::size_t study_count() const noexcept { return studies.size(); }
  std::size_t q_count() const noexcept { return q_studies.size(); }
};

/// Throws ValidationError if the dataset violates its invariants.
CompiledData compile(const Dataset& d);

/// Effective mixture weight of a term given the latent shares.
inline double term_weight(const MixtureTerm& term, std::span<const double> q) noexcept {
  if (term.q_slot < 0) {
    return term.weight;
  }
  const double share = q[static_cast<std::size_t>(term.q_slot)];
  return term.weight * (term.complement ? 1.0 - share : share);
}

/// Log-likelihood of a compiled series. `logit_at(state, t)` returns the logit
/// of the test-positive probability of `state` at the series' t-th threshold;
/// logits must be non-increasing in t.
template <typename LogitAt>
double series_loglik(const CompiledSeries& s, std::span<const double> q, LogitAt&& logit_at) {
  const std::size_t steps = s.positives.size();
  double total = 0.0;
  double prev_s = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    double prob = 0.0;
    double gap = 0.0;
    for (const auto& term : s.mixture) {
      const double w = term_weight(term, q);
      if (w == 0.0) {
        continue;
      }
      const double a = logit_at(term.state, t);
      prob += w * inverse_logit(a);
      gap += w * (t == 0 ? inverse_logit(-a) : inverse_logit_difference(logit_at(term.state, t - 1), a));
    }
    const std::int64_t trials = t == 0 ? s.total : s.positives[t - 1];
    const std::int64_t x = s.positives[t];
    const double log_prev = std::log(clamp_probability(prev_s));
    const double log_s = std::log(clamp_probability(prob));
    total += binomial_logpmf_logs(x, trials, log_s - (t == 0 ? 0.0 : log_prev),
                                  std::log(gap) - (t == 0 ? 0.0 : log_prev));
    prev_s = prob;
  }
  return total;
}

}  // namespace stagesens
