#include "stagesens/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace stagesens {

std::string_view to_string(TestKind kind) noexcept {
  return kind == TestKind::binary ? "binary" : "multi_threshold";
}

std::string_view to_string(StageProportions::Scheme scheme) noexcept {
  return scheme == StageProportions::Scheme::per_stage ? "per_stage" : "overlap_grouped";
}

std::string_view to_string(StudyRole role) noexcept {
  switch (role) {
    case StudyRole::stage_specific:
      return "stage_specific";
    case StudyRole::overall:
      return "overall";
    case StudyRole::merged:
      return "merged";
  }
  return "unknown";
}

StateSet StateSet::single(int state) {
  if (state < 0) {
    throw std::invalid_argument("state index must be non-negative");
  }
  return StateSet(Kind::single, {state});
}

StateSet StateSet::merged(std::vector<int> stages) {
  std::sort(stages.begin(), stages.end());
  if (std::adjacent_find(stages.begin(), stages.end()) != stages.end()) {
    throw std::invalid_argument("merged state set repeats a stage");
  }
  if (stages.size() < 2) {
    throw std::invalid_argument("merged state set needs at least two stages");
  }
  if (stages.front() < 1) {
    throw std::invalid_argument("merged state set may only contain stages 1..J");
  }
  return StateSet(Kind::merged, std::move(stages));
}

StateSet StateSet::all_stages() { return StateSet(Kind::all_stages, {}); }

namespace {

int parse_state_index(std::string_view token) {
  int value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || token.empty()) {
    throw std::invalid_argument("bad state token '" + std::string(token) + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

StateSet StateSet::parse(std::string_view token, int stages) {
  if (token == "all") {
    return all_stages();
  }
  if (token.find('+') == std::string_view::npos) {
    const int state = parse_state_index(token);
    if (state < 0 || state > stages) {
      throw std::invalid_argument("unknown state index " + std::string(token) + " (J = " +
                                  std::to_string(stages) + ")");
    }
    return single(state);
  }
  std::vector<int> members;
  std::size_t start = 0;
  while (start <= token.size()) {
    const auto plus = token.find('+', start);
    const auto piece = token.substr(start, plus == std::string_view::npos ? plus : plus - start);
    const int stage = parse_state_index(piece);
    if (stage < 1 || stage > stages) {
      throw std::invalid_argument("unknown stage index " + std::string(piece) +
                                  " in merged state '" + std::string(token) + "'");
    }
    members.push_back(stage);
    if (plus == std::string_view::npos) {
      break;
    }
    start = plus + 1;
  }
  return merged(std::move(members));
}

std::string StateSet::token() const {
  switch (kind_) {
    case Kind::single:
      return std::to_string(stages_.front());
    case Kind::all_stages:
      return "all";
    case Kind::merged: {
      std::string out;
      for (std::size_t i = 0; i < stages_.size(); ++i) {
        if (i > 0) {
          out += '+';
        }
        out += std::to_string(stages_[i]);
      }
      return out;
    }
  }
  return {};
}

std::string describe(const Violation& v) {
  std::string out = v.rule + ": ";
  if (!v.study_id.empty()) {
    out += "study " + v.study_id;
    if (!v.state.empty()) {
      out += " state " + v.state;
    }
    out += ": ";
  }
  return out + v.message;
}

namespace {

std::string summarize_violations(const std::vector<Violation>& violations) {
  std::string out = std::to_string(violations.size()) + " dataset violation(s)";
  for (const auto& v : violations) {
    out += "\n  " + describe(v);
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : DataError(summarize_violations(violations)), violations_(std::move(violations)) {}

std::vector<std::string> Dataset::study_ids() const {
  std::vector<std::string> ids;
  std::set<std::string, std::less<>> seen;
  for (const auto& r : records) {
    if (seen.insert(r.study_id).second) {
      ids.push_back(r.study_id);
    }
  }
  return ids;
}

StudyRole Dataset::role(std::string_view study_id) const {
  bool merged = false;
  for (const auto& r : records) {
    if (r.study_id != study_id) {
      continue;
    }
    if (r.state.kind() == StateSet::Kind::all_stages) {
      return StudyRole::overall;
    }
    merged = merged || r.state.kind() == StateSet::Kind::merged;
  }
  return merged ? StudyRole::merged : StudyRole::stage_specific;
}

const StageProportions* Dataset::proportions_for(std::string_view study_id) const {
  for (const auto& p : proportions) {
    if (p.study_id == study_id) {
      return &p;
    }
  }
  return nullptr;
}

std::vector<Series> Dataset::series() const {
  const auto ids = study_ids();
  std::unordered_map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    order.emplace(ids[i], i);
  }
  std::map<std::pair<std::size_t, StateSet>, std::vector<const StudyRecord*>> groups;
  for (const auto& r : records) {
    groups[{order.at(r.study_id), r.state}].push_back(&r);
  }
  std::vector<Series> out;
  out.reserve(groups.size());
  for (auto& [key, members] : groups) {
    std::stable_sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
      return a->threshold.value_or(0.0) < b->threshold.value_or(0.0);
    });
    Series s;
    s.study_id = ids[key.first];
    s.state = key.second;
    s.total = members.front()->total;
    for (const auto* r : members) {
      if (r->threshold) {
        s.thresholds.push_back(*r->threshold);
      }
      s.positives.push_back(r->positives);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Violation> validate(const Dataset& d) {
  std::vector<Violation> out;
  auto report = [&out](std::string study, std::string state, std::string rule, std::string msg) {
    out.push_back({std::move(study), std::move(state), std::move(rule), std::move(msg)});
  };

  if (d.stages < 1) {
    report("", "", "stage_count", "J must be at least 1");
    return out;
  }

  // Per-record checks.
  for (const auto& r : d.records) {
    const std::string token = r.state.token();
    if (r.study_id.empty()) {
      report("", token, "study_id", "empty study id");
    }
    if (r.state.is_single() && r.state.state() > d.stages) {
      report(r.study_id, token, "state_range",
             "state index exceeds J = " + std::to_string(d.stages));
    }
    if (r.state.kind() == StateSet::Kind::merged) {
      const auto& m = r.state.merged_stages();
      if (m.back() > d.stages) {
        report(r.study_id, token, "state_range",
               "merged stage exceeds J = " + std::to_string(d.stages));
      }
      if (m.size() != 2) {
        report(r.study_id, token, "merged_arity",
               "only merged pairs of stages can be modelled");
      }
    }
    if (r.positives < 0 || r.total < 0) {
      report(r.study_id, token, "count_sign", "counts must be non-negative");
    }
    if (r.positives > r.total) {
      report(r.study_id, token, "positives_le_total",
             "positives " + std::to_string(r.positives) + " exceed total " +
                 std::to_string(r.total));
    }
    if (d.kind == TestKind::binary && r.threshold) {
      report(r.study_id, token, "threshold_presence", "binary dataset record has a threshold");
    }
    if (d.kind == TestKind::multi_threshold) {
      if (!r.threshold) {
        report(r.study_id, token, "threshold_presence",
               "multi-threshold dataset record lacks a threshold");
      } else if (!(*r.threshold > 0.0) || !std::isfinite(*r.threshold)) {
        report(r.study_id, token, "threshold_positive",
               "threshold " + format_double(*r.threshold) + " is not a positive number");
      }
    }
  }

  // Per (study, state set) checks.
  std::map<std::pair<std::string, StateSet>, std::vector<const StudyRecord*>> groups;
  for (const auto& r : d.records) {
    groups[{r.study_id, r.state}].push_back(&r);
  }
  for (auto& [key, members] : groups) {
    const auto& [study, state] = key;
    const std::string token = state.token();
    if (d.kind == TestKind::binary) {
      if (members.size() > 1) {
        report(study, token, "duplicate_record", "binary study reports a state set twice");
      }
      continue;
    }
    std::stable_sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
      return a->threshold.value_or(0.0) < b->threshold.value_or(0.0);
    });
    for (std::size_t t = 1; t < members.size(); ++t) {
      const auto* prev = members[t - 1];
      const auto* cur = members[t];
      if (!prev->threshold || !cur->threshold) {
        continue;
      }
      if (*prev->threshold == *cur->threshold) {
        report(study, token, "duplicate_threshold",
               "threshold " + format_double(*cur->threshold) + " appears twice");
        continue;
      }
      if (cur->total != prev->total) {
        report(study, token, "constant_total",
               "total changes from " + std::to_string(prev->total) + " to " +
                   std::to_string(cur->total) + " at threshold " +
                   format_double(*cur->threshold));
      }
      if (cur->positives > prev->positives) {
        report(study, token, "non_increasing_positives",
               "positives increase from " + std::to_string(prev->positives) + " at threshold " +
                   format_double(*prev->threshold) + " to " + std::to_string(cur->positives) +
                   " at threshold " + format_double(*cur->threshold));
      }
    }
  }

  // Proportions.
  const auto ids = d.study_ids();
  const std::set<std::string> id_set(ids.begin(), ids.end());
  std::map<std::string, int> entries;
  for (const auto& p : d.proportions) {
    ++entries[p.study_id];
    if (!id_set.contains(p.study_id)) {
      report(p.study_id, "", "orphan_proportions", "proportions given for a study with no records");
    }
    const std::size_t expected = p.scheme == StageProportions::Scheme::per_stage
                                     ? static_cast<std::size_t>(d.stages)
                                     : static_cast<std::size_t>(d.stages - 1);
    if (p.scheme == StageProportions::Scheme::overlap_grouped && d.stages < 2) {
      report(p.study_id, "", "proportion_scheme", "overlap_grouped needs J >= 2");
      continue;
    }
    if (p.values.size() != expected) {
      report(p.study_id, "", "proportion_length",
             std::string(to_string(p.scheme)) + " needs " + std::to_string(expected) +
                 " values, got " + std::to_string(p.values.size()));
      continue;
    }
    bool in_range = true;
    for (double v : p.values) {
      in_range = in_range && v >= 0.0 && v <= 1.0;
    }
    if (!in_range) {
      report(p.study_id, "", "proportion_range", "proportions must lie in [0, 1]");
    }
    const double sum = std::accumulate(p.values.begin(), p.values.end(), 0.0);
    if (std::abs(sum - 1.0) > kProportionSumTolerance) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "proportions sum %g ≠ 1", sum);
      report(p.study_id, "", "proportion_sum", buf);
    }
  }
  for (const auto& [study, count] : entries) {
    if (count > 1) {
      report(study, "", "duplicate_proportions", "more than one proportions entry");
    }
  }
  for (const auto& id : ids) {
    const StageProportions* props = d.proportions_for(id);
    bool has_all = false;
    for (const auto& r : d.records) {
      if (r.study_id != id) {
        continue;
      }
      if (r.state.kind() == StateSet::Kind::all_stages) {
        has_all = true;
      }
      if (r.state.kind() == StateSet::Kind::merged && props != nullptr &&
          props->scheme == StageProportions::Scheme::per_stage && r.state.merged_stages().size() == 2 &&
          props->values.size() == static_cast<std::size_t>(d.stages)) {
        const auto& m = r.state.merged_stages();
        if (m.back() <= d.stages && props->values[m[0] - 1] + props->values[m[1] - 1] <= 0.0) {
          report(id, r.state.token(), "overlap_split",
                 "per-stage proportions give zero mass to the merged stages");
        }
      }
    }
    if (has_all && props == nullptr) {
      report(id, "all", "overall_proportions", "overall record lacks stage proportions");
    }
  }
  return out;
}

Dataset aggregate_to_overall(const Dataset& d, const std::vector<std::string>& study_ids) {
  Dataset out = d;
  for (const auto& id : study_ids) {
    // threshold (or 0 for binary) -> per-stage (positives, total)
    std::map<double, std::vector<std::optional<std::pair<std::int64_t, std::int64_t>>>> cells;
    std::vector<std::int64_t> stage_totals(d.stages, -1);
    std::set<double> thresholds;
    for (const auto& r : d.records) {
      if (r.study_id != id || !r.state.is_single() || r.state.state() == 0) {
        continue;
      }
      const int stage = r.state.state();
      const double key = r.threshold.value_or(0.0);
      thresholds.insert(key);
      auto& row = cells[key];
      row.resize(d.stages);
      row[stage - 1] = std::make_pair(r.positives, r.total);
      stage_totals[stage - 1] = r.total;
    }
    if (cells.empty()) {
      throw DataError("aggregate_to_overall: study " + id + " has no stage records");
    }
    for (int j = 0; j < d.stages; ++j) {
      if (stage_totals[j] < 0) {
        throw DataError("aggregate_to_overall: study " + id + " lacks records for stage " +
                        std::to_string(j + 1));
      }
    }
    std::vector<StudyRecord> merged;
    for (const auto& [key, row] : cells) {
      StudyRecord rec;
      rec.study_id = id;
      rec.state = StateSet::all_stages();
      if (d.kind == TestKind::multi_threshold) {
        rec.threshold = key;
      }
      for (int j = 0; j < d.stages; ++j) {
        if (!row[j]) {
          throw DataError("aggregate_to_overall: study " + id + " stage " + std::to_string(j + 1) +
                          " has no record at threshold " + format_double(key));
        }
        rec.positives += row[j]->first;
        rec.total += row[j]->second;
      }
      merged.push_back(std::move(rec));
    }
    const std::int64_t diseased =
        std::accumulate(stage_totals.begin(), stage_totals.end(), std::int64_t{0});
    if (diseased <= 0) {
      throw DataError("aggregate_to_overall: study " + id + " has no diseased participants");
    }
    StageProportions props{id, StageProportions::Scheme::per_stage, {}};
    for (auto n : stage_totals) {
      props.values.push_back(static_cast<double>(n) / static_cast<double>(diseased));
    }

    // Keep the record order stable: the overall block goes where the first
    // stage record of the study used to be.
    std::vector<StudyRecord> rebuilt;
    rebuilt.reserve(out.records.size());
    bool inserted = false;
    for (auto& r : out.records) {
      const bool stage_record = r.study_id == id && r.state.is_single() && r.state.state() > 0;
      if (!stage_record) {
        rebuilt.push_back(std::move(r));
        continue;
      }
      if (!inserted) {
        rebuilt.insert(rebuilt.end(), merged.begin(), merged.end());
        inserted = true;
      }
    }
    out.records = std::move(rebuilt);
    std::erase_if(out.proportions, [&id](const auto& p) { return p.study_id == id; });
    out.proportions.push_back(std::move(props));
  }
  return out;
}

Dataset stage_specific_only(const Dataset& d) {
  Dataset out;
  out.stages = d.stages;
  out.kind = d.kind;
  for (const auto& r : d.records) {
    if (r.state.is_single()) {
      out.records.push_back(r);
    }
  }
  return out;
}

}  // namespace stagesens
