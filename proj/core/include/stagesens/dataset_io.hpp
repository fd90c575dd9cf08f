#pragma once

// CSV reading and writing for datasets.
//
// records.csv:     study_id,state,threshold,positives,total
// proportions.csv: study_id,scheme,v1,...,vJ
//
// `state` is an integer state index, "j1+j2" for a merged pair, or "all".
// `threshold` is empty for binary tests. Unused trailing proportion columns
// are left empty.

#include <filesystem>
#include <iosfwd>

#include "stagesens/data_model.hpp"

namespace stagesens {

struct DatasetMeta {
  int stages = 3;
  TestKind kind = TestKind::binary;
};

/// Parses and validates a dataset. Malformed rows throw DataError naming the
/// file line; invariant violations throw ValidationError.
Dataset parse_dataset(std::istream& records, std::istream* proportions, const DatasetMeta& meta);

Dataset read_dataset(const std::filesystem::path& records,
                     const std::filesystem::path& proportions, const DatasetMeta& meta);

void write_records(const Dataset& d, std::ostream& out);
void write_proportions(const Dataset& d, std::ostream& out);

/// Writes records.csv and proportions.csv into `directory`.
void write_dataset(const Dataset& d, const std::filesystem::path& directory);

}  // namespace stagesens
