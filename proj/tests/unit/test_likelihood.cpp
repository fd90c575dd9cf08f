#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "stagesens/likelihood.hpp"

using namespace stagesens;
using oracle::Tolerances;

namespace {

Series chain(std::vector<std::int64_t> x, std::int64_t n, StateSet state = StateSet::single(1)) {
  Series s;
  s.study_id = "s";
  s.state = state;
  s.positives = std::move(x);
  s.total = n;
  for (std::size_t t = 0; t < s.positives.size(); ++t) {
    s.thresholds.push_back(10.0 * static_cast<double>(t + 1));
  }
  return s;
}

}  // namespace

TEST_CASE("stage-specific binomial") {
  CHECK(loglik_stage_specific(0, 10, 0.5) == doctest::Approx(10.0 * std::log(0.5)).epsilon(1e-14));
  CHECK(std::abs(loglik_stage_specific(10, 10, 1.0 - 1e-12)) < 1e-9);
  const double want = std::lgamma(21.0) - std::lgamma(15.0) - std::lgamma(7.0) +
                      14.0 * std::log(0.7) + 6.0 * std::log(0.3);
  CHECK(loglik_stage_specific(14, 20, 0.7) == doctest::Approx(want).epsilon(1e-13));
  for (std::int64_t n = 0; n <= 20; ++n) {
    for (std::int64_t x = 0; x <= n; ++x) {
      for (const double p : {0.05, 0.3, 0.77, 0.95}) {
        CHECK(std::abs(loglik_stage_specific(x, n, p) - oracle::binomial_logpmf_direct(x, n, p)) <
              Tolerances::exact);
      }
    }
  }
}

TEST_CASE("overall mixture") {
  const std::vector<double> s{0.7, 0.8, 0.95};
  const std::vector<double> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(loglik_overall(20, 30, thirds, s) ==
        doctest::Approx(loglik_stage_specific(20, 30, 0.8166666666666667)).epsilon(1e-13));
  const std::vector<double> degenerate{1.0, 0.0, 0.0};
  CHECK(loglik_overall(6, 10, degenerate, std::vector<double>{0.42, 0.9, 0.1}) ==
        loglik_stage_specific(6, 10, 0.42));
  const std::vector<double> p{0.25, 0.5, 0.25};
  CHECK(std::abs(loglik_overall(40, 50, p, s) - oracle::binomial_logpmf_direct(40, 50, 0.8125)) <
        1e-9);
}

TEST_CASE("overlap mixture") {
  CHECK(loglik_overlap(5, 10, 1.0, 0.3, 0.9) == loglik_stage_specific(5, 10, 0.3));
  CHECK(loglik_overlap(5, 10, 0.5, 0.6, 0.8) ==
        doctest::Approx(loglik_stage_specific(5, 10, 0.7)).epsilon(1e-14));
  CHECK(std::abs(loglik_overlap(15, 20, 0.3, 0.7, 0.8) -
                 oracle::binomial_logpmf_direct(15, 20, 0.77)) < 1e-10);
}

TEST_CASE("chain of length one is a binomial") {
  const auto s = chain({7}, 19);
  const std::vector<double> p{0.4};
  CHECK(loglik_chain(s, p) == doctest::Approx(loglik_stage_specific(7, 19, 0.4)).epsilon(1e-14));
}

TEST_CASE("chain second term uses the probability ratio") {
  const auto s = chain({16, 8}, 20);
  const std::vector<double> p{0.8, 0.4};
  const double want = loglik_stage_specific(16, 20, 0.8) + loglik_stage_specific(8, 16, 0.5);
  CHECK(loglik_chain(s, p) == doctest::Approx(want).epsilon(1e-13));

  oracle::SmallInstance inst{20, {16, 8}, {0.8, 0.4}};
  CHECK(std::abs(loglik_chain(s, p) - oracle::multinomial_chain_oracle(inst)) < Tolerances::exact);
}

TEST_CASE("chain rejects increasing probabilities") {
  const auto s = chain({5, 4}, 10);
  const std::vector<double> p{0.4, 0.6};
  CHECK_THROWS_AS(loglik_chain(s, p), std::logic_error);
}

TEST_CASE("chain after a zero count contributes nothing more") {
  const auto s = chain({0, 0, 0}, 12);
  const std::vector<double> p{0.3, 0.2, 0.1};
  CHECK(loglik_chain(s, p) == doctest::Approx(loglik_stage_specific(0, 12, 0.3)).epsilon(1e-14));
}

TEST_CASE("telescoping identity on random small instances") {
  std::mt19937_64 gen(42);
  for (int i = 0; i < 500; ++i) {
    const auto inst = oracle::random_instance(gen);
    const auto s = chain(inst.positives, inst.total);
    CHECK(std::abs(loglik_chain(s, inst.probs) - oracle::multinomial_chain_oracle(inst)) <
          Tolerances::exact);
  }
}

TEST_CASE("chain pmf sums to one over every admissible count tuple") {
  const std::vector<double> probs{0.7, 0.45, 0.2};
  for (std::int64_t n : {0, 1, 5, 12}) {
    double mass = 0.0;
    oracle::enumerate_chains(n, 3, [&](const std::vector<std::int64_t>& x) {
      mass += std::exp(loglik_chain(chain(x, n), probs));
    });
    CHECK(std::abs(mass - 1.0) < Tolerances::normalization);
  }
}

TEST_CASE("overall chain mixes per-stage curves") {
  const auto s = chain({20, 9}, 30, StateSet::all_stages());
  const std::vector<double> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const std::vector<std::vector<double>> rows{{0.37, 0.09}, {0.54, 0.20}, {0.87, 0.60}};
  const double sall0 = (0.37 + 0.54 + 0.87) / 3.0;
  CHECK(sall0 == doctest::Approx(0.5933333).epsilon(1e-6));
  const double sall1 = (0.09 + 0.20 + 0.60) / 3.0;
  const std::vector<double> mixed{sall0, sall1};
  CHECK(loglik_overall_chain(s, thirds, rows) ==
        doctest::Approx(loglik_chain(s, mixed)).epsilon(1e-13));
  // mixture bounds
  for (std::size_t t = 0; t < 2; ++t) {
    const double lo = std::min({rows[0][t], rows[1][t], rows[2][t]});
    const double hi = std::max({rows[0][t], rows[1][t], rows[2][t]});
    CHECK(mixed[t] >= lo);
    CHECK(mixed[t] <= hi);
  }
  const std::vector<double> only_second{0.0, 1.0, 0.0};
  CHECK(loglik_overall_chain(s, only_second, rows) == loglik_chain(s, rows[1]));
}

TEST_CASE("overlap chain") {
  const auto s = chain({6, 2}, 10, StateSet::merged({1, 2}));
  const std::vector<double> s1{0.4, 0.2};
  const std::vector<double> s2{0.6, 0.3};
  const std::vector<double> mid{0.5, 0.25};
  CHECK(loglik_overlap_chain(s, 0.5, s1, s2) == doctest::Approx(loglik_chain(s, mid)).epsilon(1e-14));
  oracle::SmallInstance inst{10, {6, 2}, {0.3 * 0.4 + 0.7 * 0.6, 0.3 * 0.2 + 0.7 * 0.3}};
  CHECK(std::abs(loglik_overlap_chain(s, 0.3, s1, s2) - oracle::multinomial_chain_oracle(inst)) <
        Tolerances::exact);
}

TEST_CASE("overall type-2 chain") {
  const auto s = chain({7}, 10, StateSet::all_stages());
  const std::vector<double> s1{0.4};
  const std::vector<double> s2{0.6};
  const std::vector<double> s3{0.9};
  const std::vector<double> want{0.66};
  CHECK(loglik_overall_type2_chain(s, 0.6, 0.4, 0.5, s1, s2, s3) ==
        doctest::Approx(loglik_chain(s, want)).epsilon(1e-13));
  CHECK(loglik_overall_type2_chain(s, 1.0, 0.0, 0.3, s1, s2, s3) ==
        doctest::Approx(loglik_overlap_chain(s, 0.3, s1, s2)).epsilon(1e-14));
  CHECK(loglik_overall_type2_chain(s, 0.0, 1.0, 0.3, s1, s2, s3) ==
        doctest::Approx(loglik_chain(s, s3)).epsilon(1e-14));
}

TEST_CASE("saturated chain maximizes every term") {
  std::mt19937_64 gen(8);
  for (int i = 0; i < 200; ++i) {
    const auto inst = oracle::random_instance(gen);
    const double sat = saturated_chain_logpmf(inst.positives, inst.total);
    CHECK(sat >= oracle::multinomial_chain_oracle(inst) - 1e-12);
  }
  const std::vector<std::int64_t> x{14};
  const double d = 2.0 * (saturated_chain_logpmf(x, 20) - loglik_stage_specific(14, 20, 0.5));
  const double want =
      2.0 * (oracle::binomial_logpmf_direct(14, 20, 0.7) - oracle::binomial_logpmf_direct(14, 20, 0.5));
  CHECK(d == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("compiled routing of merged and overall records") {
  Dataset d;
  d.stages = 3;
  d.records = {{"a", StateSet::single(0), std::nullopt, 2, 30},
               {"a", StateSet::merged({1, 2}), std::nullopt, 12, 20},
               {"a", StateSet::single(3), std::nullopt, 9, 10},
               {"b", StateSet::all_stages(), std::nullopt, 30, 40},
               {"c", StateSet::all_stages(), std::nullopt, 30, 40}};
  d.proportions = {{"b", StageProportions::Scheme::per_stage, {0.2, 0.3, 0.5}},
                   {"c", StageProportions::Scheme::overlap_grouped, {0.6, 0.4}}};
  const auto c = compile(d);
  CHECK(c.q_count() == 2);
  CHECK(c.q_slot_of_study == std::vector<int>{0, -1, 1});
  const std::vector<double> q{0.25, 0.5};
  const std::vector<double> logits{-2.0, 0.3, 1.1, 2.5};
  auto at = [&](int state, std::size_t) { return logits[static_cast<std::size_t>(state)]; };
  const auto s = [&](int j) { return inverse_logit(logits[static_cast<std::size_t>(j)]); };
  const auto find = [&](const std::string& study, const StateSet& state) -> const CompiledSeries& {
    for (const auto& s : c.series) {
      if (c.studies[s.study] == study && s.state == state) {
        return s;
      }
    }
    throw std::logic_error("series not found");
  };
  CHECK(series_loglik(find("a", StateSet::merged({1, 2})), q, at) ==
        doctest::Approx(loglik_overlap(12, 20, 0.25, s(1), s(2))).epsilon(1e-12));
  const std::vector<double> props{0.2, 0.3, 0.5};
  const std::vector<double> sens{s(1), s(2), s(3)};
  CHECK(series_loglik(find("b", StateSet::all_stages()), q, at) ==
        doctest::Approx(loglik_overall(30, 40, props, sens)).epsilon(1e-12));
  const double type2 = 0.6 * (0.5 * s(1) + 0.5 * s(2)) + 0.4 * s(3);
  CHECK(series_loglik(find("c", StateSet::all_stages()), q, at) ==
        doctest::Approx(loglik_stage_specific(30, 40, type2)).epsilon(1e-12));
}

TEST_CASE("merged record with a known split uses it as data") {
  Dataset d;
  d.stages = 3;
  d.records = {{"a", StateSet::merged({1, 2}), std::nullopt, 12, 20}};
  d.proportions = {{"a", StageProportions::Scheme::per_stage, {0.3, 0.1, 0.6}}};
  const auto c = compile(d);
  CHECK(c.q_count() == 0);
  const std::vector<double> logits{0.0, 0.4, -0.7, 1.0};
  auto at = [&](int state, std::size_t) { return logits[static_cast<std::size_t>(state)]; };
  const double p = 0.75 * inverse_logit(0.4) + 0.25 * inverse_logit(-0.7);
  CHECK(series_loglik(c.series[0], {}, at) ==
        doctest::Approx(loglik_stage_specific(12, 20, p)).epsilon(1e-12));
}
