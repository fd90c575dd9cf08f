#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "draws_io.hpp"
#include "run_config.hpp"
#include "stagesens/binary_model.hpp"
#include "stagesens/dataset_io.hpp"
#include "stagesens/posterior.hpp"
#include "stagesens/rng.hpp"
#include "stagesens/simulate.hpp"
#include "stagesens/threshold_model.hpp"

namespace stagesens::cli {

namespace {

namespace fs = std::filesystem;

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    std::cerr << "error: dataset failed validation:\n";
    for (const auto& v : e.violations()) {
      std::cerr << "  " << describe(v) << '\n';
    }
    return kExitValidation;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + p.string());
  }
  return out;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

RunConfig effective_config(const FitOptions& o) {
  RunConfig cfg = load_config(o.config);
  if (o.seed) {
    cfg.sampler.seed = *o.seed;
  }
  if (!o.grid.empty()) {
    const bool allow = cfg.grid.allow_outside;
    cfg.grid = parse_grid(o.grid);
    cfg.grid.allow_outside = allow;
  }
  if (o.allow_grid_outside) {
    cfg.grid.allow_outside = true;
  }
  return cfg;
}

Dataset load_data(const FitOptions& o, const RunConfig& cfg) {
  Dataset d = read_dataset(o.records, o.proportions, {cfg.stages, cfg.test_kind()});
  if (cfg.analysis == Analysis::stage_specific_only) {
    d = stage_specific_only(d);
  }
  return d;
}

std::unique_ptr<HierarchicalModel> build_model(const Dataset& d, const RunConfig& cfg) {
  if (cfg.model == ModelKind::binary) {
    return std::make_unique<BinaryModel>(d);
  }
  return std::make_unique<ThresholdModel>(d, CovStructure::version(cfg.version));
}

void write_outputs(const fs::path& dir, const FitSummary& s) {
  {
    auto out = open_out(dir / "summary.csv");
    write_summary_csv(out, s);
  }
  {
    auto out = open_out(dir / "curves.csv");
    write_curves_csv(out, s);
  }
  {
    auto out = open_out(dir / "deviance.json");
    write_deviance_json(out, s.deviance);
  }
  {
    auto out = open_out(dir / "summary.txt");
    write_report(out, s);
  }
  if (!s.converged()) {
    std::cerr << "WARNING: chains have not converged: " << s.not_converged.size()
              << " parameter(s) with R-hat > " << kRhatThreshold << " (see summary.txt)\n";
  }
  for (const auto& w : s.warnings) {
    std::cerr << "warning: " << w << '\n';
  }
}

}  // namespace

int cmd_simulate(const SimulateOptions& o) {
  return guarded([&] {
    SimSpec spec;
    {
      std::ifstream in(o.spec);
      if (!in) {
        throw ConfigError("cannot open spec file " + o.spec.string());
      }
      try {
        spec = read_sim_spec(in);
        if (o.seed) {
          std::visit([&](auto& s) { s.seed = *o.seed; }, spec);
        }
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid spec: ") + e.what());
      }
    }
    const Simulation sim = simulate(spec);
    fs::create_directories(o.out / "ideal");
    write_dataset(sim.observed, o.out);
    write_dataset(sim.ideal, o.out / "ideal");
    auto out = open_out(o.out / "truth.json");
    write_truth(out, spec, sim);
    std::cout << "wrote " << sim.stage_specific_ids.size() + sim.overall_ids.size() << " studies ("
              << sim.stage_specific_ids.size() << " stage-specific) to " << o.out.string() << '\n';
    return kExitOk;
  });
}

int cmd_fit(const FitOptions& o) {
  return guarded([&] {
    const RunConfig cfg = effective_config(o);
    const Dataset d = load_data(o, cfg);
    const auto model = build_model(d, cfg);
    const auto grid = resolve_grid(cfg.grid, model->data());
    fs::create_directories(o.out);

    const auto draws = mcmc::run(*model, cfg.sampler);
    {
      auto out = open_out(o.out / "draws.csv");
      write_draws(out, draws, cfg.sampler.burn_in, cfg.sampler.thin);
    }

    nlohmann::ordered_json manifest;
    manifest["tool"] = "stagesens";
    manifest["command"] = "fit";
    manifest["model"] = model->label();
    manifest["seed"] = cfg.sampler.seed;
    manifest["rng_algorithm"] = std::string(kRngAlgorithm);
    manifest["config_hash"] = config_hash(cfg);
    manifest["config"] = cfg.to_json();
    manifest["inputs"] = {{"records", o.records.string()}, {"records_fnv1a", file_hash(o.records)}};
    if (!o.proportions.empty()) {
      manifest["inputs"]["proportions"] = o.proportions.string();
      manifest["inputs"]["proportions_fnv1a"] = file_hash(o.proportions);
    }
    nlohmann::ordered_json acc = nlohmann::ordered_json::array();
    for (const auto& b : mcmc::mean_acceptance(draws)) {
      acc.push_back({{"block", b.name}, {"rate", b.rate}, {"scale", b.scale}});
    }
    manifest["acceptance"] = acc;
    {
      auto out = open_out(o.out / "manifest.json");
      out << manifest.dump(2) << '\n';
    }

    const FitSummary s = summarize(draws, *model, grid);
    write_outputs(o.out, s);
    std::cout << model->label() << ": DIC " << s.deviance.dic << " (resdev " << s.deviance.resdev
              << ", pD " << s.deviance.pd << "); outputs in " << o.out.string() << '\n';
    return kExitOk;
  });
}

int cmd_summarize(const SummarizeOptions& o) {
  return guarded([&] {
    const RunConfig cfg = effective_config(o.fit);
    const Dataset d = load_data(o.fit, cfg);
    const auto model = build_model(d, cfg);
    const auto grid = resolve_grid(cfg.grid, model->data());
    std::ifstream in(o.draws);
    if (!in) {
      throw ConfigError("cannot open draws file " + o.draws.string());
    }
    const auto draws = read_draws(in);
    if (draws.names != model->parameter_names()) {
      throw ConfigError("draws columns do not match the model built from this config and data");
    }
    fs::create_directories(o.fit.out);
    const FitSummary s = summarize(draws, *model, grid);
    write_outputs(o.fit.out, s);
    std::cout << model->label() << ": DIC " << s.deviance.dic << "; outputs in "
              << o.fit.out.string() << '\n';
    return kExitOk;
  });
}

int cmd_compare(const CompareOptions& o) {
  return guarded([&] {
    if (o.inputs.size() < 2) {
      throw ConfigError("compare: need >= 2 deviance files");
    }
    struct Entry {
      fs::path file;
      DevianceSummary d;
    };
    std::vector<Entry> rows;
    for (const auto& p : o.inputs) {
      std::ifstream in(p);
      if (!in) {
        throw ConfigError("cannot open " + p.string());
      }
      try {
        rows.push_back({p, read_deviance_json(in)});
      } catch (const std::runtime_error& e) {
        throw DataError(p.string() + ": " + e.what());
      }
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Entry& a, const Entry& b) { return a.d.dic < b.d.dic; });
    const double best = rows.front().d.dic;
    std::ostringstream table;
    table << "rank,label,file,resdev,pD,DIC,delta_DIC,note\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double delta = rows[i].d.dic - best;
      std::string note;
      if (i == 0) {
        note = "best";
      } else if (delta < 3.0) {
        note = "equivalent under rule of thumb";
      }
      char buf[160];
      std::snprintf(buf, sizeof buf, "%.1f,%.1f,%.1f,%.1f", rows[i].d.resdev, rows[i].d.pd,
                    rows[i].d.dic, delta);
      table << i + 1 << ',' << csv_field(rows[i].d.label) << ',' << csv_field(rows[i].file.string())
            << ',' << buf << ',' << note << '\n';
    }
    std::cout << table.str();
    if (!o.out.empty()) {
      auto out = open_out(o.out);
      out << table.str();
    }
    return kExitOk;
  });
}

}  // namespace stagesens::cli
