#pragma once

// Run configuration of the command-line tool (JSON file, see
// docs/config.md) and the run manifest written next to every fit.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagesens/data_model.hpp"
#include "stagesens/likelihood.hpp"
#include "stagesens/sampler.hpp"

namespace stagesens::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { binary, threshold };
enum class Analysis { joint, stage_specific_only };

struct GridSpec {
  std::optional<double> min;
  std::optional<double> max;
  int points = 101;
  bool allow_outside = false;
};

struct RunConfig {
  ModelKind model = ModelKind::binary;
  Analysis analysis = Analysis::joint;
  int stages = 3;
  /// Threshold-model version 1..6.
  int version = 1;
  mcmc::SamplerConfig sampler;
  GridSpec grid;

  TestKind test_kind() const noexcept {
    return model == ModelKind::binary ? TestKind::binary : TestKind::multi_threshold;
  }
  nlohmann::ordered_json to_json() const;
  /// Throws ConfigError naming the offending field.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Reads a config file. A run manifest is accepted too; its "config" member
/// is used.
RunConfig load_config(const std::filesystem::path& path);

/// Parses "min:max:n".
GridSpec parse_grid(std::string_view text);

/// Grid for a compiled dataset: the configured bounds, defaulting to the
/// observed threshold range. Throws ConfigError for bounds outside the
/// observed range unless allow_outside is set.
std::vector<double> resolve_grid(const GridSpec& grid, const CompiledData& data);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
/// 16 hex digits of the FNV-1a hash of the canonical config JSON.
std::string config_hash(const RunConfig& cfg);

}  // namespace stagesens::cli
