#include "stagesens/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace stagesens {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    const auto end = comma == std::string::npos ? line.size() : comma;
    cells.emplace_back(trim(std::string_view(line).substr(start, end - start)));
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return cells;
}

bool blank(const std::string& line) {
  return trim(line).empty();
}

class RowError : public DataError {
 public:
  RowError(const std::string& file, int line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what) {}
};

template <typename T>
T parse_number(const std::string& cell, const std::string& file, int line, const char* column) {
  T value{};
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw RowError(file, line, std::string("bad ") + column + " value '" + cell + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void expect_header(const std::vector<std::string>& header, const std::vector<std::string>& want,
                   const std::string& file) {
  if (header.size() < want.size()) {
    throw RowError(file, 1, "header has too few columns");
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (header[i] != want[i]) {
      throw RowError(file, 1, "expected column '" + want[i] + "', found '" + header[i] + "'");
    }
  }
}

}  // namespace

Dataset parse_dataset(std::istream& records, std::istream* proportions, const DatasetMeta& meta) {
  Dataset d;
  d.stages = meta.stages;
  d.kind = meta.kind;
  if (meta.stages < 1) {
    throw DataError("number of stages must be at least 1");
  }

  const std::string rfile = "records.csv";
  std::string line;
  int lineno = 0;
  bool have_header = false;
  std::set<std::tuple<std::string, StateSet, double>> seen;
  while (std::getline(records, line)) {
    ++lineno;
    if (blank(line)) {
      continue;
    }
    const auto cells = split_row(line);
    if (!have_header) {
      expect_header(cells, {"study_id", "state", "threshold", "positives", "total"}, rfile);
      have_header = true;
      continue;
    }
    if (cells.size() != 5) {
      throw RowError(rfile, lineno, "expected 5 columns, found " + std::to_string(cells.size()));
    }
    StudyRecord r;
    r.study_id = cells[0];
    if (r.study_id.empty()) {
      throw RowError(rfile, lineno, "empty study_id");
    }
    try {
      r.state = StateSet::parse(cells[1], meta.stages);
    } catch (const std::invalid_argument& e) {
      throw RowError(rfile, lineno, e.what());
    }
    if (!cells[2].empty()) {
      r.threshold = parse_number<double>(cells[2], rfile, lineno, "threshold");
    }
    if (meta.kind == TestKind::binary && r.threshold) {
      throw RowError(rfile, lineno, "binary dataset row has a threshold");
    }
    if (meta.kind == TestKind::multi_threshold && !r.threshold) {
      throw RowError(rfile, lineno, "multi-threshold dataset row lacks a threshold");
    }
    r.positives = parse_number<std::int64_t>(cells[3], rfile, lineno, "positives");
    r.total = parse_number<std::int64_t>(cells[4], rfile, lineno, "total");
    if (r.positives < 0 || r.total < 0) {
      throw RowError(rfile, lineno, "counts must be non-negative");
    }
    if (r.positives > r.total) {
      throw RowError(rfile, lineno,
                     "positives " + cells[3] + " exceed total " + cells[4]);
    }
    if (!seen.emplace(r.study_id, r.state, r.threshold.value_or(0.0)).second) {
      throw RowError(rfile, lineno, "duplicate record for study " + r.study_id + " state " +
                                        r.state.token() +
                                        (r.threshold ? " threshold " + cells[2] : std::string()));
    }
    d.records.push_back(std::move(r));
  }
  if (!have_header) {
    throw DataError("records.csv: missing header row");
  }

  if (proportions != nullptr) {
    const std::string pfile = "proportions.csv";
    lineno = 0;
    have_header = false;
    while (std::getline(*proportions, line)) {
      ++lineno;
      if (blank(line)) {
        continue;
      }
      const auto cells = split_row(line);
      if (!have_header) {
        expect_header(cells, {"study_id", "scheme"}, pfile);
        have_header = true;
        continue;
      }
      if (cells.size() < 3) {
        throw RowError(pfile, lineno, "expected study_id, scheme and at least one value");
      }
      StageProportions p;
      p.study_id = cells[0];
      if (cells[1] == "per_stage") {
        p.scheme = StageProportions::Scheme::per_stage;
      } else if (cells[1] == "overlap_grouped") {
        p.scheme = StageProportions::Scheme::overlap_grouped;
      } else {
        throw RowError(pfile, lineno, "unknown scheme '" + cells[1] + "'");
      }
      std::size_t last = cells.size();
      while (last > 2 && cells[last - 1].empty()) {
        --last;
      }
      for (std::size_t c = 2; c < last; ++c) {
        p.values.push_back(parse_number<double>(cells[c], pfile, lineno, "proportion"));
      }
      // Published proportions are rounded; renormalize near-unit sums. Sums
      // already unit up to floating-point error are kept as written.
      const double sum = std::accumulate(p.values.begin(), p.values.end(), 0.0);
      if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12 &&
          std::abs(sum - 1.0) <= kProportionRenormalizeWindow) {
        for (auto& v : p.values) {
          v /= sum;
        }
      }
      d.proportions.push_back(std::move(p));
    }
  }

  auto violations = validate(d);
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return d;
}

Dataset read_dataset(const std::filesystem::path& records,
                     const std::filesystem::path& proportions, const DatasetMeta& meta) {
  std::ifstream rin(records);
  if (!rin) {
    throw DataError("cannot open " + records.string());
  }
  if (proportions.empty()) {
    return parse_dataset(rin, nullptr, meta);
  }
  std::ifstream pin(proportions);
  if (!pin) {
    throw DataError("cannot open " + proportions.string());
  }
  return parse_dataset(rin, &pin, meta);
}

void write_records(const Dataset& d, std::ostream& out) {
  out << "study_id,state,threshold,positives,total\n";
  for (const auto& r : d.records) {
    out << r.study_id << ',' << r.state.token() << ','
        << (r.threshold ? format_double(*r.threshold) : std::string()) << ',' << r.positives
        << ',' << r.total << '\n';
  }
}

void write_proportions(const Dataset& d, std::ostream& out) {
  out << "study_id,scheme";
  for (int j = 1; j <= d.stages; ++j) {
    out << ",v" << j;
  }
  out << '\n';
  for (const auto& p : d.proportions) {
    out << p.study_id << ',' << to_string(p.scheme);
    for (int j = 0; j < d.stages; ++j) {
      out << ',';
      if (static_cast<std::size_t>(j) < p.values.size()) {
        out << format_double(p.values[j]);
      }
    }
    out << '\n';
  }
}

void write_dataset(const Dataset& d, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  std::ofstream rout(directory / "records.csv", std::ios::binary);
  std::ofstream pout(directory / "proportions.csv", std::ios::binary);
  if (!rout || !pout) {
    throw DataError("cannot write dataset into " + directory.string());
  }
  write_records(d, rout);
  write_proportions(d, pout);
  if (!rout || !pout) {
    throw DataError("I/O failure writing dataset into " + directory.string());
  }
}

}  // namespace stagesens
