#pragma once

// Dataset taxonomy for stage-stratified test accuracy reviews.
//
// States are indexed 0 = disease-free and 1..J = disease stages in order of
// severity, so every study has K = J + 1 states. A study reports counts for
// single states, for a merged pair of stages, or for all stages pooled
// ("overall"), the latter together with stage proportions.

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stagesens {

enum class TestKind { binary, multi_threshold };

std::string_view to_string(TestKind kind) noexcept;

class StateSet {
 public:
  enum class Kind { single, merged, all_stages };

  /// Throws std::invalid_argument for a negative state.
  static StateSet single(int state);
  /// Sorts and checks the stage list: >= 2 distinct stages, all >= 1.
  static StateSet merged(std::vector<int> stages);
  static StateSet all_stages();

  /// Parses "j", "j1+j2" or "all". Stage indices are checked against `stages`.
  static StateSet parse(std::string_view token, int stages);

  Kind kind() const noexcept { return kind_; }
  bool is_single() const noexcept { return kind_ == Kind::single; }
  /// The state of a single set; -1 otherwise.
  int state() const noexcept { return kind_ == Kind::single ? stages_.front() : -1; }
  /// Member stages of a merged set (empty for the other kinds).
  const std::vector<int>& merged_stages() const noexcept { return stages_; }

  std::string token() const;

  friend auto operator<=>(const StateSet&, const StateSet&) = default;
  friend bool operator==(const StateSet&, const StateSet&) = default;

 private:
  StateSet(Kind kind, std::vector<int> stages) : kind_(kind), stages_(std::move(stages)) {}

  Kind kind_ = Kind::all_stages;
  std::vector<int> stages_;
};

struct StudyRecord {
  std::string study_id;
  StateSet state = StateSet::all_stages();
  std::optional<double> threshold;
  std::int64_t positives = 0;
  std::int64_t total = 0;

  friend bool operator==(const StudyRecord&, const StudyRecord&) = default;
};

struct StageProportions {
  enum class Scheme {
    /// values = (p_1, ..., p_J)
    per_stage,
    /// values = (qov, p_3, ..., p_J): share of the stage-1/2 overlap group,
    /// then the remaining stages.
    overlap_grouped,
  };

  std::string study_id;
  Scheme scheme = Scheme::per_stage;
  std::vector<double> values;

  friend bool operator==(const StageProportions&, const StageProportions&) = default;
};

std::string_view to_string(StageProportions::Scheme scheme) noexcept;

enum class StudyRole {
  stage_specific,  // only single-state records
  overall,         // has an all-stages record
  merged,          // has a merged-stage record but no all-stages record
};

std::string_view to_string(StudyRole role) noexcept;

/// All records of one study for one state set, ordered by threshold.
/// Binary series have no thresholds and exactly one count.
struct Series {
  std::string study_id;
  StateSet state = StateSet::all_stages();
  std::vector<double> thresholds;
  std::vector<std::int64_t> positives;
  std::int64_t total = 0;
};

struct Violation {
  std::string study_id;
  std::string state;  // state-set token, empty when not applicable
  std::string rule;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::string describe(const Violation& v);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public DataError {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

struct Dataset {
  int stages = 3;  // J
  TestKind kind = TestKind::binary;
  std::vector<StudyRecord> records;
  std::vector<StageProportions> proportions;

  int states() const noexcept { return stages + 1; }

  /// Study ids in order of first appearance in `records`.
  std::vector<std::string> study_ids() const;
  StudyRole role(std::string_view study_id) const;
  const StageProportions* proportions_for(std::string_view study_id) const;

  /// Records grouped by (study, state set) in study order, state-set order
  /// within a study, thresholds ascending.
  std::vector<Series> series() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Tolerance for proportions summing to one.
inline constexpr double kProportionSumTolerance = 1e-6;
/// Parsed proportions within this distance of one are renormalized.
inline constexpr double kProportionRenormalizeWindow = 0.02;

/// Checks every dataset invariant; an empty result means the dataset is valid.
std::vector<Violation> validate(const Dataset& d);

/// Replaces the stage records of each named study with all-stages records
/// (summed per threshold) and per-stage proportions N_j / sum N_j.
Dataset aggregate_to_overall(const Dataset& d, const std::vector<std::string>& study_ids);

/// Only single-state records; drops merged and all-stages records and the
/// proportions that came with them.
Dataset stage_specific_only(const Dataset& d);

}  // namespace stagesens
