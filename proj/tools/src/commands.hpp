#pragma once

// Subcommands of the stagesens tool. Each returns a process exit code.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stagesens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitInternal = 4;

struct SimulateOptions {
  std::filesystem::path spec;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct FitOptions {
  std::filesystem::path records;
  std::filesystem::path proportions;  // empty when absent
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::string grid;  // "min:max:n" or empty
  bool allow_grid_outside = false;
};

struct SummarizeOptions {
  FitOptions fit;
  std::filesystem::path draws;
};

struct CompareOptions {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out;  // optional CSV copy of the table
};

int cmd_simulate(const SimulateOptions& o);
int cmd_fit(const FitOptions& o);
int cmd_summarize(const SummarizeOptions& o);
int cmd_compare(const CompareOptions& o);

}  // namespace stagesens::cli
