#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "stagesens/posterior.hpp"

namespace stagesens::cli {

namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& prefix = {}) {
  if (!j.contains(key)) {
    return;
  }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + key + ": wrong type");
  }
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known,
                    const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto k : known) {
      ok = ok || key == k;
    }
    if (!ok) {
      throw ConfigError(prefix + key + ": unknown field");
    }
  }
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model == ModelKind::binary ? "binary" : "threshold";
  j["analysis"] = analysis == Analysis::joint ? "joint" : "stage_specific_only";
  j["stages"] = stages;
  if (model == ModelKind::threshold) {
    j["version"] = version;
  }
  j["sampler"] = {{"chains", sampler.chains},
                  {"iterations", sampler.iterations},
                  {"burn_in", sampler.burn_in},
                  {"thin", sampler.thin},
                  {"seed", sampler.seed},
                  {"adapt_window", sampler.adapt_window},
                  {"target_accept_scalar", sampler.target_accept_scalar},
                  {"target_accept_vector", sampler.target_accept_vector}};
  nlohmann::ordered_json g;
  if (grid.min) {
    g["min"] = *grid.min;
  }
  if (grid.max) {
    g["max"] = *grid.max;
  }
  g["points"] = grid.points;
  g["allow_outside"] = grid.allow_outside;
  j["grid"] = g;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) {
    throw ConfigError("config: must be a JSON object");
  }
  reject_unknown(j, {"model", "analysis", "stages", "version", "sampler", "grid"}, "");
  RunConfig c;
  std::string model = "binary";
  read(j, "model", model);
  if (model == "binary") {
    c.model = ModelKind::binary;
  } else if (model == "threshold") {
    c.model = ModelKind::threshold;
  } else {
    throw ConfigError("model: must be \"binary\" or \"threshold\"");
  }
  std::string analysis = "joint";
  read(j, "analysis", analysis);
  if (analysis == "joint") {
    c.analysis = Analysis::joint;
  } else if (analysis == "stage_specific_only") {
    c.analysis = Analysis::stage_specific_only;
  } else {
    throw ConfigError("analysis: must be \"joint\" or \"stage_specific_only\"");
  }
  read(j, "stages", c.stages);
  if (c.stages < 1) {
    throw ConfigError("stages: must be >= 1");
  }
  read(j, "version", c.version);
  if (c.version < 1 || c.version > 6) {
    throw ConfigError("version: must be 1..6");
  }
  if (c.model == ModelKind::binary && j.contains("version")) {
    throw ConfigError("version: only applies to the threshold model");
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    if (!s.is_object()) {
      throw ConfigError("sampler: must be an object");
    }
    reject_unknown(s, {"chains", "iterations", "burn_in", "thin", "seed", "adapt_window",
                       "target_accept_scalar", "target_accept_vector"},
                   "sampler.");
    read(s, "chains", c.sampler.chains, "sampler.");
    read(s, "iterations", c.sampler.iterations, "sampler.");
    read(s, "burn_in", c.sampler.burn_in, "sampler.");
    read(s, "thin", c.sampler.thin, "sampler.");
    read(s, "seed", c.sampler.seed, "sampler.");
    read(s, "adapt_window", c.sampler.adapt_window, "sampler.");
    read(s, "target_accept_scalar", c.sampler.target_accept_scalar, "sampler.");
    read(s, "target_accept_vector", c.sampler.target_accept_vector, "sampler.");
  }
  try {
    c.sampler.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    if (!g.is_object()) {
      throw ConfigError("grid: must be an object");
    }
    reject_unknown(g, {"min", "max", "points", "allow_outside"}, "grid.");
    double v = 0.0;
    if (g.contains("min")) {
      read(g, "min", v, "grid.");
      c.grid.min = v;
    }
    if (g.contains("max")) {
      read(g, "max", v, "grid.");
      c.grid.max = v;
    }
    read(g, "points", c.grid.points, "grid.");
    read(g, "allow_outside", c.grid.allow_outside, "grid.");
  }
  if (c.grid.points < 1) {
    throw ConfigError("grid.points: must be >= 1");
  }
  if (c.grid.min && c.grid.max && *c.grid.max < *c.grid.min) {
    throw ConfigError("grid.max: must not be below grid.min");
  }
  if ((c.grid.min && !(*c.grid.min > 0.0)) || (c.grid.max && !(*c.grid.max > 0.0))) {
    throw ConfigError("grid: thresholds must be positive");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) {
    return RunConfig::from_json(j.at("config"));
  }
  return RunConfig::from_json(j);
}

GridSpec parse_grid(std::string_view text) {
  GridSpec g;
  const auto a = text.find(':');
  const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (b == std::string_view::npos) {
    throw ConfigError("--grid: expected min:max:n");
  }
  auto number = [&](std::string_view part, auto& out) {
    const auto res = std::from_chars(part.data(), part.data() + part.size(), out);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size()) {
      throw ConfigError("--grid: cannot parse '" + std::string(part) + "'");
    }
  };
  double lo = 0.0;
  double hi = 0.0;
  number(text.substr(0, a), lo);
  number(text.substr(a + 1, b - a - 1), hi);
  number(text.substr(b + 1), g.points);
  if (!(lo > 0.0) || hi < lo || g.points < 1) {
    throw ConfigError("--grid: need 0 < min <= max and n >= 1");
  }
  g.min = lo;
  g.max = hi;
  return g;
}

std::vector<double> resolve_grid(const GridSpec& grid, const CompiledData& data) {
  if (data.kind == TestKind::binary) {
    return {};
  }
  const double lo = grid.min.value_or(data.min_threshold);
  const double hi = grid.max.value_or(data.max_threshold);
  if (!grid.allow_outside && (lo < data.min_threshold || hi > data.max_threshold)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "grid [%g, %g] lies outside the observed threshold range [%g, %g]; "
                  "pass --allow-grid-outside to override",
                  lo, hi, data.min_threshold, data.max_threshold);
    throw ConfigError(buf);
  }
  if (hi < lo) {
    throw ConfigError("grid: max below min");
  }
  return linear_grid(lo, hi, grid.points);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.to_json().dump())));
  return buf;
}

}  // namespace stagesens::cli
