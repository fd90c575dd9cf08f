#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace stagesens::cli;
  CLI::App app{"Bayesian meta-analysis of stage-specific test accuracy"};
  app.require_subcommand(1);

  SimulateOptions sim;
  std::uint64_t seed = 0;
  auto* simulate = app.add_subcommand("simulate", "generate an artificial dataset");
  simulate->add_option("--spec", sim.spec, "simulation spec (JSON)")->required();
  simulate->add_option("--out", sim.out, "output directory")->required();
  auto* sim_seed = simulate->add_option("--seed", seed, "override the spec seed");

  FitOptions fit;
  auto add_fit_options = [&](CLI::App* cmd, FitOptions& f) {
    cmd->add_option("--records", f.records, "records.csv")->required();
    cmd->add_option("--proportions", f.proportions, "proportions.csv");
    cmd->add_option("--config", f.config, "run config (JSON) or run manifest")->required();
    cmd->add_option("--out", f.out, "output directory")->required();
    cmd->add_option("--grid", f.grid, "curve grid min:max:n");
    cmd->add_flag("--allow-grid-outside", f.allow_grid_outside,
                  "allow a curve grid beyond the observed threshold range");
    return cmd->add_option("--seed", seed, "override the config seed");
  };
  auto* fit_cmd = app.add_subcommand("fit", "fit a model and write summaries");
  auto* fit_seed = add_fit_options(fit_cmd, fit);

  SummarizeOptions summ;
  auto* summarize = app.add_subcommand("summarize", "re-summarize stored draws");
  auto* summ_seed = add_fit_options(summarize, summ.fit);
  summarize->add_option("--draws", summ.draws, "draws.csv from a fit")->required();

  CompareOptions cmp;
  auto* compare = app.add_subcommand("compare", "rank fits by DIC");
  compare->add_option("inputs", cmp.inputs, "deviance.json files")->required();
  compare->add_option("--out", cmp.out, "also write the table to this CSV file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*simulate) {
    if (*sim_seed) {
      sim.seed = seed;
    }
    return cmd_simulate(sim);
  }
  if (*fit_cmd) {
    if (*fit_seed) {
      fit.seed = seed;
    }
    return cmd_fit(fit);
  }
  if (*summarize) {
    if (*summ_seed) {
      summ.fit.seed = seed;
    }
    return cmd_summarize(summ);
  }
  return cmd_compare(cmp);
}
