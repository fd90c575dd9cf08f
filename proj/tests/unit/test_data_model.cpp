#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "stagesens/data_model.hpp"
#include "stagesens/dataset_io.hpp"
#include "stagesens/simulate.hpp"

using namespace stagesens;

namespace {

Dataset parse(const std::string& records, const std::string& props, int stages, TestKind kind) {
  std::istringstream r(records);
  std::istringstream p(props);
  return parse_dataset(r, props.empty() ? nullptr : &p, {stages, kind});
}

const std::string kHeader = "study_id,state,threshold,positives,total\n";
const std::string kPropHeader = "study_id,scheme,v1,v2,v3\n";

bool has_rule(const std::vector<Violation>& v, const std::string& rule) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == rule; });
}

}  // namespace

TEST_CASE("StateSet tokens") {
  CHECK(StateSet::parse("2", 3) == StateSet::single(2));
  CHECK(StateSet::parse("all", 3) == StateSet::all_stages());
  const auto m = StateSet::parse("2+1", 3);
  CHECK(m.kind() == StateSet::Kind::merged);
  CHECK(m.merged_stages() == std::vector<int>{1, 2});
  CHECK(m.token() == "1+2");
  CHECK_THROWS_AS(StateSet::parse("4", 3), std::invalid_argument);
  CHECK_THROWS_AS(StateSet::parse("0+1", 3), std::invalid_argument);
  CHECK_THROWS_AS(StateSet::merged({2}), std::invalid_argument);
  CHECK_THROWS_AS(StateSet::merged({2, 2}), std::invalid_argument);
}

TEST_CASE("parse a binary row") {
  const auto d = parse(kHeader + "s1,1,,14,20\n", "", 3, TestKind::binary);
  REQUIRE(d.records.size() == 1);
  const StudyRecord want{"s1", StateSet::single(1), std::nullopt, 14, 20};
  CHECK(d.records[0] == want);
  CHECK(d.role("s1") == StudyRole::stage_specific);
}

TEST_CASE("parse an overall multi-threshold series") {
  const auto d = parse(kHeader + "s2,all,10,40,50\ns2,all,100,10,50\n",
                       kPropHeader + "s2,per_stage,0.5,0.3,0.2\n", 3, TestKind::multi_threshold);
  const auto series = d.series();
  REQUIRE(series.size() == 1);
  CHECK(series[0].positives == std::vector<std::int64_t>{40, 10});
  CHECK(series[0].thresholds == std::vector<double>{10.0, 100.0});
  CHECK(d.role("s2") == StudyRole::overall);
}

TEST_CASE("counts increasing with threshold are rejected naming study and thresholds") {
  try {
    parse(kHeader + "s3,2,10,5,20\ns3,2,100,9,20\n", "", 3, TestKind::multi_threshold);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    REQUIRE(e.violations().size() == 1);
    const auto& v = e.violations()[0];
    CHECK(v.study_id == "s3");
    CHECK(v.state == "2");
    CHECK(v.rule == "non_increasing_positives");
    CHECK(v.message.find("10") != std::string::npos);
    CHECK(v.message.find("100") != std::string::npos);
  }
}

TEST_CASE("parse errors name the line") {
  try {
    parse(kHeader + "s1,1,,14,20\ns1,2,,x,20\n", "", 3, TestKind::binary);
    FAIL("expected DataError");
  } catch (const ValidationError&) {
    FAIL("malformed rows are not validation errors");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  CHECK_THROWS_AS(parse(kHeader + "s1,1,,21,20\n", "", 3, TestKind::binary), DataError);
  CHECK_THROWS_AS(parse(kHeader + "s1,7,,1,20\n", "", 3, TestKind::binary), DataError);
  CHECK_THROWS_AS(parse(kHeader + "s1,1,,1,20\ns1,1,,2,20\n", "", 3, TestKind::binary), DataError);
  CHECK_THROWS_AS(parse(kHeader + "s1,all,,1,20\n", "", 3, TestKind::binary), ValidationError);
  CHECK_THROWS_AS(parse(kHeader + "s1,1,5,1,20\n", "", 3, TestKind::binary), DataError);
  CHECK_THROWS_AS(parse(kHeader + "s1,1,,1,20\n", "", 3, TestKind::multi_threshold), DataError);
}

TEST_CASE("validate proportions") {
  Dataset d;
  d.stages = 3;
  d.records.push_back({"s1", StateSet::all_stages(), std::nullopt, 10, 20});
  d.proportions.push_back({"s1", StageProportions::Scheme::per_stage, {0.5, 0.3, 0.2}});
  CHECK(validate(d).empty());

  d.proportions[0].values = {0.5, 0.3, 0.3};
  const auto v = validate(d);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == "proportion_sum");
  CHECK(v[0].message.find("1.1") != std::string::npos);

  d.proportions.clear();
  CHECK(has_rule(validate(d), "overall_proportions"));
}

TEST_CASE("overlap record with J = 3 is valid") {
  Dataset d;
  d.stages = 3;
  d.records.push_back({"s1", StateSet::merged({1, 2}), std::nullopt, 12, 20});
  d.records.push_back({"s1", StateSet::single(3), std::nullopt, 9, 10});
  d.records.push_back({"s1", StateSet::single(0), std::nullopt, 2, 30});
  CHECK(validate(d).empty());
  CHECK(d.role("s1") == StudyRole::merged);
}

TEST_CASE("rounded proportions are renormalized on parse") {
  const auto d = parse(kHeader + "s1,all,,10,20\n", kPropHeader + "s1,per_stage,0.33,0.33,0.33\n", 3,
                       TestKind::binary);
  const auto& v = d.proportions.at(0).values;
  CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(parse(kHeader + "s1,all,,10,20\n", kPropHeader + "s1,per_stage,0.5,0.3,0.3\n", 3,
                        TestKind::binary),
                  ValidationError);
}

TEST_CASE("validate flags multi-threshold invariants") {
  Dataset d;
  d.stages = 3;
  d.kind = TestKind::multi_threshold;
  d.records.push_back({"s1", StateSet::single(1), 10.0, 5, 20});
  d.records.push_back({"s1", StateSet::single(1), 10.0, 4, 20});
  CHECK(has_rule(validate(d), "duplicate_threshold"));
  d.records[1] = {"s1", StateSet::single(1), 20.0, 4, 21};
  CHECK(has_rule(validate(d), "constant_total"));
  d.records[1] = {"s1", StateSet::single(1), 20.0, 4, 20};
  CHECK(validate(d).empty());
}

TEST_CASE("validate is pure") {
  Dataset d;
  d.stages = 3;
  d.records.push_back({"s1", StateSet::single(1), std::nullopt, 25, 20});
  d.records.push_back({"s2", StateSet::all_stages(), std::nullopt, 2, 20});
  const auto a = validate(d);
  const auto b = validate(d);
  CHECK(a.size() == 2);
  CHECK(a == b);
}

TEST_CASE("aggregate_to_overall sums stage records") {
  Dataset d;
  d.stages = 3;
  d.records = {{"s1", StateSet::single(0), std::nullopt, 1, 40},
               {"s1", StateSet::single(1), std::nullopt, 7, 10},
               {"s1", StateSet::single(2), std::nullopt, 8, 10},
               {"s1", StateSet::single(3), std::nullopt, 9, 10}};
  const auto o = aggregate_to_overall(d, {"s1"});
  CHECK(validate(o).empty());
  REQUIRE(o.records.size() == 2);
  const auto& all = *std::find_if(o.records.begin(), o.records.end(), [](const StudyRecord& r) {
    return r.state == StateSet::all_stages();
  });
  CHECK(all.positives == 24);
  CHECK(all.total == 30);
  const auto* p = o.proportions_for("s1");
  REQUIRE(p != nullptr);
  for (const double v : p->values) {
    CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  d.records[2].total = 20;
  d.records[2].positives = 8;
  const auto o2 = aggregate_to_overall(d, {"s1"});
  CHECK(o2.proportions_for("s1")->values == std::vector<double>{0.25, 0.5, 0.25});
}

TEST_CASE("aggregate_to_overall rejects missing stage cells") {
  Dataset d;
  d.stages = 3;
  d.records = {{"s1", StateSet::single(1), std::nullopt, 7, 10},
               {"s1", StateSet::single(2), std::nullopt, 8, 10}};
  CHECK_THROWS_AS(aggregate_to_overall(d, {"s1"}), DataError);
}

TEST_CASE("aggregated continuous studies keep non-increasing counts and totals") {
  ContinuousSimSpec spec;
  spec.scenario = "II";
  spec.seed = 21;
  const auto sim = simulate_continuous(spec);
  const auto ids = sim.overall_ids;
  const auto o = aggregate_to_overall(sim.ideal, ids);
  CHECK(validate(o).empty());
  for (const auto& id : ids) {
    std::map<double, std::pair<std::int64_t, std::int64_t>> sums;
    for (const auto& r : sim.ideal.records) {
      if (r.study_id == id && r.state.is_single() && r.state.state() > 0) {
        sums[*r.threshold].first += r.positives;
        sums[*r.threshold].second += r.total;
      }
    }
    for (const auto& r : o.records) {
      if (r.study_id == id && r.state == StateSet::all_stages()) {
        CHECK(sums.at(*r.threshold).first == r.positives);
        CHECK(sums.at(*r.threshold).second == r.total);
      }
    }
  }
}

TEST_CASE("stage_specific_only drops merged and overall records") {
  Dataset d;
  d.stages = 3;
  d.records = {{"s1", StateSet::single(0), std::nullopt, 1, 40},
               {"s1", StateSet::single(2), std::nullopt, 8, 10},
               {"s2", StateSet::single(0), std::nullopt, 3, 50},
               {"s2", StateSet::all_stages(), std::nullopt, 20, 30},
               {"s3", StateSet::merged({1, 2}), std::nullopt, 5, 9}};
  d.proportions.push_back({"s2", StageProportions::Scheme::per_stage, {0.2, 0.3, 0.5}});
  const auto s = stage_specific_only(d);
  CHECK(validate(s).empty());
  CHECK(s.proportions.empty());
  for (const auto& r : s.records) {
    CHECK(r.state.is_single());
  }
  // disease-free records are routed identically in both analyses
  std::vector<StudyRecord> free_a;
  std::vector<StudyRecord> free_b;
  for (const auto& r : d.records) {
    if (r.state == StateSet::single(0)) {
      free_a.push_back(r);
    }
  }
  for (const auto& r : s.records) {
    if (r.state == StateSet::single(0)) {
      free_b.push_back(r);
    }
  }
  CHECK(free_a == free_b);
}

TEST_CASE("write and parse round-trip") {
  BinarySimSpec spec;
  spec.seed = 5;
  const auto sim = simulate_binary(spec);
  std::ostringstream r;
  std::ostringstream p;
  write_records(sim.observed, r);
  write_proportions(sim.observed, p);
  const auto back = parse(r.str(), p.str(), 3, TestKind::binary);
  CHECK(back == sim.observed);

  std::ostringstream r2;
  write_records(back, r2);
  CHECK(r2.str() == r.str());

  ContinuousSimSpec cspec;
  cspec.seed = 9;
  const auto csim = simulate_continuous(cspec);
  std::ostringstream cr;
  std::ostringstream cp;
  write_records(csim.observed, cr);
  write_proportions(csim.observed, cp);
  const auto cback = parse(cr.str(), cp.str(), 3, TestKind::multi_threshold);
  CHECK(cback.records == csim.observed.records);
  CHECK(cback.proportions == csim.observed.proportions);
  CHECK(cback == csim.observed);
}
