#include "stagesens/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stagesens/rng.hpp"
#include "stagesens/transforms.hpp"

namespace stagesens {

namespace {

using nlohmann::json;

std::string study_name(int i, int count) {
  const int width = count >= 100 ? 3 : 2;
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%0*d", width, i + 1);
  return buf;
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) {
    throw std::invalid_argument(field + ": " + what);
  }
}

void check_pd(const Matrix& cov) {
  if (!cholesky(cov)) {
    throw std::invalid_argument("covariance not positive definite");
  }
}

Matrix draw_effects(const Vector& mean, const Matrix& cov, int studies, Rng& rng) {
  const auto llt = cholesky(cov);
  Matrix out(studies, mean.size());
  for (int i = 0; i < studies; ++i) {
    out.row(i) = sample_mvn(mean, *llt, rng).transpose();
  }
  return out;
}

double uniform_in(const Range& r, Rng& rng) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

}  // namespace

Range BinarySimSpec::stage_specific_variance() const {
  switch (scenario) {
    case 'a': return {0.5, 0.5};
    case 'b': return {0.3, 0.5};
    case 'c': return {0.9, 1.2};
    default: throw std::invalid_argument("scenario: must be a, b or c");
  }
}

Range BinarySimSpec::overall_variance() const {
  switch (scenario) {
    case 'a': return {0.5, 0.5};
    case 'b': return {0.9, 1.2};
    case 'c': return {0.3, 0.5};
    default: throw std::invalid_argument("scenario: must be a, b or c");
  }
}

Matrix BinarySimSpec::covariance() const {
  const auto k = static_cast<Eigen::Index>(variances.size());
  Matrix cov(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      const double sd = std::sqrt(variances[static_cast<std::size_t>(a)] *
                                  variances[static_cast<std::size_t>(b)]);
      cov(a, b) = a == b ? sd : correlation * sd;
    }
  }
  return cov;
}

void BinarySimSpec::validate() const {
  require(studies >= 1, "studies", "must be >= 1");
  require(probabilities.size() >= 2, "probabilities", "need a disease-free and at least one stage");
  for (const double p : probabilities) {
    require(p > 0.0 && p < 1.0, "probabilities", "must lie in (0, 1)");
  }
  require(variances.size() == probabilities.size(), "variances", "need one per state");
  for (const double v : variances) {
    require(v > 0.0, "variances", "must be positive");
  }
  require(correlation > -1.0 && correlation < 1.0, "correlation", "must lie in (-1, 1)");
  require(scenario == 'a' || scenario == 'b' || scenario == 'c', "scenario", "must be a, b or c");
  require(stage_specific >= 0 && stage_specific <= studies, "stage_specific",
          "must lie in [0, studies]");
  check_pd(covariance());
}

Matrix ContinuousSimSpec::covariance() const {
  const auto k2 = static_cast<Eigen::Index>(variances.size());
  const Eigen::Index k = k2 / 2;
  Matrix cov(k2, k2);
  for (Eigen::Index a = 0; a < k2; ++a) {
    for (Eigen::Index b = 0; b < k2; ++b) {
      const double sd = std::sqrt(variances[static_cast<std::size_t>(a)] *
                                  variances[static_cast<std::size_t>(b)]);
      double r = 1.0;
      if (a != b) {
        const bool la = a < k;
        const bool lb = b < k;
        r = la && lb ? location_correlation
            : !la && !lb ? scale_correlation
                         : location_scale_correlation;
      }
      cov(a, b) = r * sd;
    }
  }
  return cov;
}

void ContinuousSimSpec::validate() const {
  require(studies >= 1, "studies", "must be >= 1");
  require(m.size() >= 4 && m.size() % 2 == 0, "m", "need locations and log-scales for >= 2 states");
  require(variances.size() == m.size(), "variances", "need one per entry of m");
  for (const double v : variances) {
    require(v > 0.0, "variances", "must be positive");
  }
  for (const auto& [name, r] : {std::pair{"location_correlation", location_correlation},
                                std::pair{"scale_correlation", scale_correlation},
                                std::pair{"location_scale_correlation", location_scale_correlation}}) {
    require(r > -1.0 && r < 1.0, name, "must lie in (-1, 1)");
  }
  require(thresholds_per_study.lo >= 1 && thresholds_per_study.hi >= thresholds_per_study.lo,
          "thresholds_per_study", "need 1 <= lo <= hi");
  require(threshold_range.lo > 0.0 && threshold_range.hi > threshold_range.lo, "threshold_range",
          "need 0 < lo < hi");
  require(disease_free_total.lo >= 1 && disease_free_total.hi >= disease_free_total.lo,
          "disease_free_total", "need 1 <= lo <= hi");
  require(diseased_total.lo >= 1 && diseased_total.hi >= diseased_total.lo, "diseased_total",
          "need 1 <= lo <= hi");
  require(scenario == "I" || scenario == "II", "scenario", "must be I or II");
  require(stage_specific >= 0 && stage_specific <= studies, "stage_specific",
          "must lie in [0, studies]");
  check_pd(covariance());
}

std::int64_t solve_sample_size(double variance, double p) {
  const double n = std::round(variance / (p * (1.0 - p)));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
}

Simulation simulate_binary(const BinarySimSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0);
  const int k = static_cast<int>(spec.probabilities.size());
  Simulation sim;
  sim.mean.resize(k);
  for (int j = 0; j < k; ++j) {
    sim.mean(j) = logit(spec.probabilities[static_cast<std::size_t>(j)]);
  }
  sim.covariance = spec.covariance();
  sim.effects = draw_effects(sim.mean, sim.covariance, spec.studies, rng);

  Dataset& ideal = sim.ideal;
  ideal.stages = k - 1;
  ideal.kind = TestKind::binary;
  const Range ss = spec.stage_specific_variance();
  const Range ov = spec.overall_variance();
  for (int i = 0; i < spec.studies; ++i) {
    const std::string id = study_name(i, spec.studies);
    const bool stage_specific = i < spec.stage_specific;
    (stage_specific ? sim.stage_specific_ids : sim.overall_ids).push_back(id);
    for (int j = 0; j < k; ++j) {
      const double s = inverse_logit(sim.effects(i, j));
      const double var = uniform_in(stage_specific ? ss : ov, rng);
      const std::int64_t n = solve_sample_size(var, s);
      ideal.records.push_back({id, StateSet::single(j), std::nullopt, rng.binomial(n, s), n});
    }
  }
  sim.observed = aggregate_to_overall(ideal, sim.overall_ids);
  return sim;
}

Simulation simulate_continuous(const ContinuousSimSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0);
  const int k = static_cast<int>(spec.m.size()) / 2;
  Simulation sim;
  sim.mean = Eigen::Map<const Vector>(spec.m.data(), static_cast<Eigen::Index>(spec.m.size()));
  sim.covariance = spec.covariance();
  sim.effects = draw_effects(sim.mean, sim.covariance, spec.studies, rng);

  Dataset& ideal = sim.ideal;
  ideal.stages = k - 1;
  ideal.kind = TestKind::multi_threshold;
  for (int i = 0; i < spec.studies; ++i) {
    const std::string id = study_name(i, spec.studies);
    (i < spec.stage_specific ? sim.stage_specific_ids : sim.overall_ids).push_back(id);
    const auto count = rng.uniform_int(spec.thresholds_per_study.lo, spec.thresholds_per_study.hi);
    std::set<double> drawn;
    while (static_cast<std::int64_t>(drawn.size()) < count) {
      drawn.insert(rng.uniform(spec.threshold_range.lo, spec.threshold_range.hi));
    }
    const std::vector<double> thresholds(drawn.begin(), drawn.end());
    for (int j = 0; j < k; ++j) {
      const IntRange& nr = j == 0 ? spec.disease_free_total : spec.diseased_total;
      const std::int64_t n = rng.uniform_int(nr.lo, nr.hi);
      const double loc = sim.effects(i, j);
      const double scale = std::exp(sim.effects(i, k + j));
      std::int64_t trials = n;
      double prev = 1.0;
      for (const double c : thresholds) {
        const double s = positivity_prob(loc, scale, c, 0.0);
        const std::int64_t x = rng.binomial(trials, std::min(1.0, s / prev));
        ideal.records.push_back({id, StateSet::single(j), c, x, n});
        trials = x;
        prev = s;
      }
    }
  }

  Dataset observed = aggregate_to_overall(ideal, sim.overall_ids);
  if (spec.scenario == "I") {
    std::vector<StudyRecord> kept;
    for (const auto& id : sim.stage_specific_ids) {
      for (int j = 1; j < k - 1; ++j) {
        std::vector<StudyRecord> cells;
        for (const auto& r : observed.records) {
          if (r.study_id == id && r.state == StateSet::single(j)) {
            cells.push_back(r);
          }
        }
        const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1);
        kept.push_back(cells[static_cast<std::size_t>(pick)]);
      }
    }
    std::vector<StudyRecord> records;
    for (const auto& r : observed.records) {
      const bool restricted = r.state.is_single() && r.state.state() >= 1 && r.state.state() < k - 1;
      if (!restricted) {
        records.push_back(r);
        continue;
      }
      const bool is_kept = std::find(kept.begin(), kept.end(), r) != kept.end();
      if (is_kept) {
        records.push_back(r);
      }
    }
    observed.records = std::move(records);
  }
  sim.observed = std::move(observed);
  return sim;
}

Simulation simulate(const SimSpec& spec) {
  return std::visit(
      [](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, BinarySimSpec>) {
          return simulate_binary(s);
        } else {
          return simulate_continuous(s);
        }
      },
      spec);
}

namespace {

template <typename T>
void read_field(const json& j, const char* name, T& out) {
  if (!j.contains(name)) {
    return;
  }
  try {
    out = j.at(name).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string(name) + ": wrong type");
  }
}

void read_range(const json& j, const char* name, Range& out) {
  std::vector<double> v{out.lo, out.hi};
  read_field(j, name, v);
  require(v.size() == 2, name, "must be [lo, hi]");
  out = {v[0], v[1]};
}

void read_range(const json& j, const char* name, IntRange& out) {
  std::vector<std::int64_t> v{out.lo, out.hi};
  read_field(j, name, v);
  require(v.size() == 2, name, "must be [lo, hi]");
  out = {v[0], v[1]};
}

void check_keys(const json& j, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    require(ok, key, "unknown field");
  }
}

}  // namespace

SimSpec read_sim_spec(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("spec: not valid JSON: ") + e.what());
  }
  require(j.is_object(), "spec", "must be a JSON object");
  std::string kind;
  read_field(j, "kind", kind);
  if (kind == "binary") {
    check_keys(j, {"kind", "studies", "probabilities", "variances", "correlation", "scenario",
                   "stage_specific", "seed"});
    BinarySimSpec s;
    read_field(j, "studies", s.studies);
    read_field(j, "probabilities", s.probabilities);
    read_field(j, "variances", s.variances);
    read_field(j, "correlation", s.correlation);
    std::string scenario(1, s.scenario);
    read_field(j, "scenario", scenario);
    require(scenario.size() == 1, "scenario", "must be a, b or c");
    s.scenario = scenario[0];
    read_field(j, "stage_specific", s.stage_specific);
    read_field(j, "seed", s.seed);
    s.validate();
    return s;
  }
  if (kind == "continuous") {
    check_keys(j, {"kind", "studies", "m", "variances", "location_correlation", "scale_correlation",
                   "location_scale_correlation", "thresholds_per_study", "threshold_range",
                   "disease_free_total", "diseased_total", "scenario", "stage_specific", "seed"});
    ContinuousSimSpec s;
    read_field(j, "studies", s.studies);
    read_field(j, "m", s.m);
    read_field(j, "variances", s.variances);
    read_field(j, "location_correlation", s.location_correlation);
    read_field(j, "scale_correlation", s.scale_correlation);
    read_field(j, "location_scale_correlation", s.location_scale_correlation);
    read_range(j, "thresholds_per_study", s.thresholds_per_study);
    read_range(j, "threshold_range", s.threshold_range);
    read_range(j, "disease_free_total", s.disease_free_total);
    read_range(j, "diseased_total", s.diseased_total);
    read_field(j, "scenario", s.scenario);
    read_field(j, "stage_specific", s.stage_specific);
    read_field(j, "seed", s.seed);
    s.validate();
    return s;
  }
  throw std::invalid_argument("kind: must be \"binary\" or \"continuous\"");
}

namespace {

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace

void write_truth(std::ostream& out, const SimSpec& spec, const Simulation& sim) {
  nlohmann::ordered_json j;
  std::vector<std::string> ids = sim.stage_specific_ids;
  ids.insert(ids.end(), sim.overall_ids.begin(), sim.overall_ids.end());
  if (const auto* b = std::get_if<BinarySimSpec>(&spec)) {
    j["kind"] = "binary";
    j["spec"] = {{"studies", b->studies},           {"probabilities", b->probabilities},
                 {"variances", b->variances},       {"correlation", b->correlation},
                 {"scenario", std::string(1, b->scenario)},
                 {"stage_specific", b->stage_specific}, {"seed", b->seed}};
    j["probabilities"] = b->probabilities;
  } else {
    const auto& c = std::get<ContinuousSimSpec>(spec);
    j["kind"] = "continuous";
    j["spec"] = {{"studies", c.studies},
                 {"m", c.m},
                 {"variances", c.variances},
                 {"location_correlation", c.location_correlation},
                 {"scale_correlation", c.scale_correlation},
                 {"location_scale_correlation", c.location_scale_correlation},
                 {"thresholds_per_study", {c.thresholds_per_study.lo, c.thresholds_per_study.hi}},
                 {"threshold_range", {c.threshold_range.lo, c.threshold_range.hi}},
                 {"disease_free_total", {c.disease_free_total.lo, c.disease_free_total.hi}},
                 {"diseased_total", {c.diseased_total.lo, c.diseased_total.hi}},
                 {"scenario", c.scenario},
                 {"stage_specific", c.stage_specific},
                 {"seed", c.seed}};
    j["lambda"] = 0.0;
  }
  j["mean"] = std::vector<double>(sim.mean.data(), sim.mean.data() + sim.mean.size());
  j["covariance"] = matrix_json(sim.covariance);
  j["stage_specific_studies"] = sim.stage_specific_ids;
  j["overall_studies"] = sim.overall_ids;
  nlohmann::ordered_json effects = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = sim.effects.row(static_cast<Eigen::Index>(i));
    effects[ids[i]] = std::vector<double>(row.begin(), row.end());
  }
  j["study_effects"] = effects;
  out << j.dump(2) << '\n';
}

}  // namespace stagesens
