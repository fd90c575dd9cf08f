#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stagesens/simulate.hpp"
#include "stagesens/transforms.hpp"

using namespace stagesens;

namespace {

std::vector<StudyRecord> disease_free(const Dataset& d) {
  std::vector<StudyRecord> out;
  for (const auto& r : d.records) {
    if (r.state == StateSet::single(0)) {
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("sample size for a target binomial variance") {
  CHECK(solve_sample_size(0.5, 0.05) == 11);
  CHECK(solve_sample_size(0.5, 0.5) == 2);
  CHECK(solve_sample_size(0.01, 0.5) == 1);
  CHECK(solve_sample_size(1.2, 0.95) == 25);
}

TEST_CASE("binary simulation layout") {
  BinarySimSpec spec;
  spec.seed = 3;
  const auto sim = simulate_binary(spec);
  CHECK(sim.stage_specific_ids.size() == 4);
  CHECK(sim.overall_ids.size() == 16);
  CHECK(validate(sim.ideal).empty());
  CHECK(validate(sim.observed).empty());
  CHECK(sim.ideal.records.size() == 80);
  for (const auto& id : sim.overall_ids) {
    CHECK(sim.observed.role(id) == StudyRole::overall);
    CHECK(sim.observed.proportions_for(id) != nullptr);
  }
  for (const auto& id : sim.stage_specific_ids) {
    CHECK(sim.observed.role(id) == StudyRole::stage_specific);
  }
  CHECK(disease_free(sim.ideal) == disease_free(sim.observed));
}

TEST_CASE("scenario a sample sizes follow the binomial variance") {
  BinarySimSpec spec;
  spec.seed = 4;
  const auto sim = simulate_binary(spec);
  for (const auto& r : sim.ideal.records) {
    const auto i = static_cast<Eigen::Index>(
        std::find(sim.stage_specific_ids.begin(), sim.stage_specific_ids.end(), r.study_id) -
        sim.stage_specific_ids.begin());
    (void)i;
    CHECK(r.total >= 1);
    CHECK(r.positives <= r.total);
  }
  // first study: n_j = round(0.5 / (s (1 - s))) with s the study's true probability
  for (int j = 0; j < 4; ++j) {
    const double s = inverse_logit(sim.effects(0, j));
    const auto& r = sim.ideal.records[static_cast<std::size_t>(j)];
    CHECK(r.total == solve_sample_size(0.5, s));
  }
}

TEST_CASE("simulation is deterministic given the seed") {
  BinarySimSpec spec;
  spec.seed = 77;
  CHECK(simulate_binary(spec).observed == simulate_binary(spec).observed);
  auto other = spec;
  other.seed = 78;
  CHECK_FALSE(simulate_binary(other).ideal == simulate_binary(spec).ideal);
  ContinuousSimSpec cspec;
  cspec.seed = 5;
  CHECK(simulate_continuous(cspec).observed == simulate_continuous(cspec).observed);
}

TEST_CASE("study effects follow the population distribution") {
  BinarySimSpec spec;
  spec.studies = 200;
  spec.stage_specific = 200;
  spec.seed = 12;
  const auto sim = simulate_binary(spec);
  for (int j = 0; j < 4; ++j) {
    const double mean = sim.effects.col(j).mean();
    const double se = std::sqrt(spec.variances[static_cast<std::size_t>(j)] / 200.0);
    CHECK(std::abs(mean - logit(spec.probabilities[static_cast<std::size_t>(j)])) < 3.0 * se);
  }
}

TEST_CASE("continuous simulation layout") {
  ContinuousSimSpec spec;
  spec.scenario = "II";
  spec.seed = 8;
  const auto sim = simulate_continuous(spec);
  CHECK(sim.stage_specific_ids.size() == 5);
  CHECK(sim.overall_ids.size() == 25);
  CHECK(validate(sim.ideal).empty());
  CHECK(validate(sim.observed).empty());
  for (const auto& s : sim.ideal.series()) {
    CHECK(std::is_sorted(s.thresholds.begin(), s.thresholds.end()));
    CHECK(std::adjacent_find(s.positives.begin(), s.positives.end(), std::less<>()) ==
          s.positives.end());
    CHECK(s.thresholds.front() >= 5.0);
    CHECK(s.thresholds.back() <= 150.0);
    CHECK(s.thresholds.size() <= 10);
  }
  CHECK(disease_free(sim.ideal) == disease_free(sim.observed));
}

TEST_CASE("scenario I keeps one threshold per early stage in stage-specific studies") {
  ContinuousSimSpec spec;
  spec.seed = 9;
  const auto sim = simulate_continuous(spec);
  CHECK(validate(sim.observed).empty());
  for (const auto& s : sim.observed.series()) {
    const bool specific = std::find(sim.stage_specific_ids.begin(), sim.stage_specific_ids.end(),
                                    s.study_id) != sim.stage_specific_ids.end();
    if (!specific || !s.state.is_single()) {
      continue;
    }
    const int j = s.state.state();
    if (j == 1 || j == 2) {
      CHECK(s.thresholds.size() == 1);
    }
  }
  // kept points are taken from the ideal view
  for (const auto& r : sim.observed.records) {
    if (r.state.is_single()) {
      CHECK(std::find(sim.ideal.records.begin(), sim.ideal.records.end(), r) !=
            sim.ideal.records.end());
    }
  }
}

TEST_CASE("spec files") {
  std::istringstream ok(R"({"kind": "binary", "scenario": "b", "seed": 4})");
  const auto s = read_sim_spec(ok);
  REQUIRE(std::holds_alternative<BinarySimSpec>(s));
  CHECK(std::get<BinarySimSpec>(s).scenario == 'b');
  CHECK(std::get<BinarySimSpec>(s).studies == 20);

  std::istringstream unknown(R"({"kind": "binary", "studys": 4})");
  CHECK_THROWS_WITH_AS(read_sim_spec(unknown), doctest::Contains("studys"), std::invalid_argument);

  std::istringstream corr(R"({"kind": "binary", "correlation": 1.5})");
  CHECK_THROWS_WITH_AS(read_sim_spec(corr), doctest::Contains("correlation"), std::invalid_argument);

  std::istringstream npd(R"({"kind": "binary", "correlation": -0.5})");
  CHECK_THROWS_WITH_AS(read_sim_spec(npd), doctest::Contains("covariance not positive definite"),
                       std::invalid_argument);

  std::istringstream cont(R"({"kind": "continuous", "threshold_range": [10, 100], "scenario": "II"})");
  const auto c = std::get<ContinuousSimSpec>(read_sim_spec(cont));
  CHECK(c.threshold_range.lo == 10.0);
  CHECK(c.scenario == "II");

  std::istringstream kind(R"({"kind": "ordinal"})");
  CHECK_THROWS_AS(read_sim_spec(kind), std::invalid_argument);
}

TEST_CASE("truth file echoes the spec and the true values") {
  BinarySimSpec spec;
  const auto sim = simulate_binary(spec);
  std::ostringstream out;
  write_truth(out, spec, sim);
  CHECK(out.str().find("\"probabilities\"") != std::string::npos);
  CHECK(out.str().find("\"study_effects\"") != std::string::npos);
}
