#include "stagesens/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stagesens {

namespace {

const double kLogFloor = std::log(kProbabilityFloor);
const double kLogCeiling = std::log1p(-kProbabilityFloor);

double clamp_log_probability(double v) {
  if (std::isnan(v)) {
    return kLogFloor;
  }
  return std::clamp(v, kLogFloor, kLogCeiling);
}

}  // namespace

double log_binomial_coefficient(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) {
    return -std::numeric_limits<double>::infinity();
  }
  if (k == 0 || k == n) {
    return 0.0;
  }
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double binomial_logpmf_logs(std::int64_t x, std::int64_t n, double log_p, double log_q) {
  if (n == 0) {
    return x == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  double value = log_binomial_coefficient(n, x);
  if (x > 0) {
    value += static_cast<double>(x) * clamp_log_probability(log_p);
  }
  if (n - x > 0) {
    value += static_cast<double>(n - x) * clamp_log_probability(log_q);
  }
  return value;
}

double binomial_logpmf(std::int64_t x, std::int64_t n, double p) {
  p = clamp_probability(p);
  return binomial_logpmf_logs(x, n, std::log(p), std::log1p(-p));
}

double chain_logpmf(std::span<const std::int64_t> positives, std::int64_t total,
                    std::span<const double> probs, std::span<const double> gaps) {
  if (probs.size() != positives.size() || gaps.size() != positives.size()) {
    throw std::invalid_argument("chain_logpmf: size mismatch");
  }
  double value = 0.0;
  double log_prev = 0.0;
  for (std::size_t t = 0; t < positives.size(); ++t) {
    const std::int64_t trials = t == 0 ? total : positives[t - 1];
    const double log_s = std::log(clamp_probability(probs[t]));
    value += binomial_logpmf_logs(positives[t], trials, log_s - log_prev,
                                  std::log(gaps[t]) - log_prev);
    log_prev = log_s;
  }
  return value;
}

double chain_logpmf(std::span<const std::int64_t> positives, std::int64_t total,
                    std::span<const double> probs) {
  std::vector<double> gaps(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (t > 0 && probs[t] > probs[t - 1]) {
      throw std::logic_error("chain_logpmf: test-positive probability increases with threshold");
    }
    gaps[t] = t == 0 ? 1.0 - probs[0] : probs[t - 1] - probs[t];
  }
  return chain_logpmf(positives, total, probs, gaps);
}

double saturated_chain_logpmf(std::span<const std::int64_t> positives, std::int64_t total) {
  double value = 0.0;
  for (std::size_t t = 0; t < positives.size(); ++t) {
    const std::int64_t n = t == 0 ? total : positives[t - 1];
    const std::int64_t x = positives[t];
    if (n == 0 || x == 0 || x == n) {
      continue;
    }
    const double dn = static_cast<double>(n);
    const double dx = static_cast<double>(x);
    value += log_binomial_coefficient(n, x) + dx * std::log(dx / dn) +
             (dn - dx) * std::log((dn - dx) / dn);
  }
  return value;
}

double loglik_stage_specific(std::int64_t positives, std::int64_t total, double sensitivity) {
  return binomial_logpmf(positives, total, sensitivity);
}

double loglik_overall(std::int64_t positives, std::int64_t total,
                      std::span<const double> proportions, std::span<const double> sensitivities) {
  if (proportions.size() != sensitivities.size()) {
    throw std::invalid_argument("loglik_overall: size mismatch");
  }
  double mix = 0.0;
  for (std::size_t j = 0; j < proportions.size(); ++j) {
    mix += proportions[j] * sensitivities[j];
  }
  return binomial_logpmf(positives, total, mix);
}

double loglik_overlap(std::int64_t positives, std::int64_t total, double q, double s1, double s2) {
  return binomial_logpmf(positives, total, q * s1 + (1.0 - q) * s2);
}

double loglik_chain(const Series& series, std::span<const double> probs) {
  return chain_logpmf(series.positives, series.total, probs);
}

double loglik_overall_chain(const Series& series, std::span<const double> proportions,
                            const std::vector<std::vector<double>>& stage_probs) {
  if (proportions.size() != stage_probs.size()) {
    throw std::invalid_argument("loglik_overall_chain: one probability row per stage expected");
  }
  std::vector<double> mix(series.positives.size(), 0.0);
  for (std::size_t j = 0; j < stage_probs.size(); ++j) {
    for (std::size_t t = 0; t < mix.size(); ++t) {
      mix[t] += proportions[j] * stage_probs[j].at(t);
    }
  }
  return chain_logpmf(series.positives, series.total, mix);
}

double loglik_overlap_chain(const Series& series, double q, std::span<const double> s1,
                            std::span<const double> s2) {
  std::vector<double> mix(series.positives.size());
  for (std::size_t t = 0; t < mix.size(); ++t) {
    mix[t] = q * s1[t] + (1.0 - q) * s2[t];
  }
  return chain_logpmf(series.positives, series.total, mix);
}

double loglik_overall_type2_chain(const Series& series, double qov, double p_adv, double q,
                                  std::span<const double> s1, std::span<const double> s2,
                                  std::span<const double> s3) {
  std::vector<double> mix(series.positives.size());
  for (std::size_t t = 0; t < mix.size(); ++t) {
    mix[t] = qov * (q * s1[t] + (1.0 - q) * s2[t]) + p_adv * s3[t];
  }
  return chain_logpmf(series.positives, series.total, mix);
}

CompiledData compile(const Dataset& d) {
  auto violations = validate(d);
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  CompiledData out;
  out.stages = d.stages;
  out.kind = d.kind;
  out.studies = d.study_ids();
  out.series_of_study.resize(out.studies.size());
  out.q_slot_of_study.assign(out.studies.size(), -1);
  for (const auto& id : out.studies) {
    out.roles.push_back(d.role(id));
  }

  auto slot_for = [&out](std::size_t study) {
    if (out.q_slot_of_study[study] < 0) {
      out.q_slot_of_study[study] = static_cast<int>(out.q_studies.size());
      out.q_studies.push_back(study);
    }
    return out.q_slot_of_study[study];
  };

  bool first_threshold = true;
  const auto all_series = d.series();
  for (const auto& s : all_series) {
    const auto study = static_cast<std::size_t>(
        std::find(out.studies.begin(), out.studies.end(), s.study_id) - out.studies.begin());
    const StageProportions* props = d.proportions_for(s.study_id);

    CompiledSeries c;
    c.study = study;
    c.state = s.state;
    c.thresholds = s.thresholds;
    c.positives = s.positives;
    c.total = s.total;
    c.saturated_loglik = saturated_chain_logpmf(c.positives, c.total);

    switch (s.state.kind()) {
      case StateSet::Kind::single:
        c.mixture.push_back({s.state.state(), 1.0});
        break;
      case StateSet::Kind::merged: {
        const int a = s.state.merged_stages()[0];
        const int b = s.state.merged_stages()[1];
        if (props != nullptr && props->scheme == StageProportions::Scheme::per_stage) {
          const double pa = props->values[a - 1];
          const double pb = props->values[b - 1];
          const double q = pa / (pa + pb);
          c.mixture.push_back({a, q});
          c.mixture.push_back({b, 1.0 - q});
        } else {
          const int slot = slot_for(study);
          c.mixture.push_back({a, 1.0, slot, false});
          c.mixture.push_back({b, 1.0, slot, true});
        }
        break;
      }
      case StateSet::Kind::all_stages: {
        if (props->scheme == StageProportions::Scheme::per_stage) {
          for (int j = 1; j <= d.stages; ++j) {
            c.mixture.push_back({j, props->values[j - 1]});
          }
        } else {
          const int slot = slot_for(study);
          const double qov = props->values[0];
          c.mixture.push_back({1, qov, slot, false});
          c.mixture.push_back({2, qov, slot, true});
          for (int j = 3; j <= d.stages; ++j) {
            c.mixture.push_back({j, props->values[j - 2]});
          }
        }
        break;
      }
    }
    std::erase_if(c.mixture, [](const MixtureTerm& t) { return t.weight == 0.0; });

    for (double threshold : c.thresholds) {
      if (first_threshold) {
        out.min_threshold = out.max_threshold = threshold;
        first_threshold = false;
      }
      out.min_threshold = std::min(out.min_threshold, threshold);
      out.max_threshold = std::max(out.max_threshold, threshold);
    }
    out.series_of_study[study].push_back(out.series.size());
    out.series.push_back(std::move(c));
  }
  return out;
}

}  // namespace stagesens
