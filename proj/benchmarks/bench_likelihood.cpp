#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "stagesens/binary_model.hpp"
#include "stagesens/likelihood.hpp"
#include "stagesens/simulate.hpp"
#include "stagesens/threshold_model.hpp"

namespace {

using namespace stagesens;

Series make_chain(int steps) {
  Series s;
  s.study_id = "s";
  s.state = StateSet::single(1);
  s.total = 1000;
  std::int64_t x = 900;
  for (int t = 0; t < steps; ++t) {
    s.thresholds.push_back(5.0 + 10.0 * t);
    s.positives.push_back(x);
    x = x * 4 / 5;
  }
  return s;
}

void BM_LoglikChain(benchmark::State& state) {
  const auto s = make_chain(static_cast<int>(state.range(0)));
  std::vector<double> p;
  for (std::size_t t = 0; t < s.positives.size(); ++t) {
    p.push_back(0.9 * std::pow(0.8, static_cast<double>(t)));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(loglik_chain(s, p));
  }
}
BENCHMARK(BM_LoglikChain)->Arg(1)->Arg(4)->Arg(10);

void BM_BinaryLogPosterior(benchmark::State& state) {
  BinarySimSpec spec;
  spec.studies = static_cast<int>(state.range(0));
  const auto sim = simulate_binary(spec);
  const BinaryModel model(sim.observed);
  Rng rng(1, 0);
  std::vector<double> flat(model.parameter_count());
  model.start_chain(rng)->write(flat);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.log_posterior(flat));
  }
}
BENCHMARK(BM_BinaryLogPosterior)->Arg(20)->Arg(100);

void BM_ThresholdLogPosterior(benchmark::State& state) {
  ContinuousSimSpec spec;
  spec.studies = static_cast<int>(state.range(0));
  const auto sim = simulate_continuous(spec);
  const ThresholdModel model(sim.observed, CovStructure::version(1));
  Rng rng(1, 0);
  std::vector<double> flat(model.parameter_count());
  model.start_chain(rng)->write(flat);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.log_posterior(flat));
  }
}
BENCHMARK(BM_ThresholdLogPosterior)->Arg(30)->Arg(120);

void BM_ThresholdSweep(benchmark::State& state) {
  ContinuousSimSpec spec;
  const auto sim = simulate_continuous(spec);
  const ThresholdModel model(sim.observed, CovStructure::version(static_cast<int>(state.range(0))));
  mcmc::SamplerConfig cfg;
  Rng rng(1, 0);
  auto kernel = model.start_chain(rng);
  mcmc::ChainState chain(cfg.seed, 0, model.proposal_blocks(), cfg);
  for (auto _ : state) {
    kernel->sweep(chain);
  }
}
BENCHMARK(BM_ThresholdSweep)->Arg(1)->Arg(6);

}  // namespace

BENCHMARK_MAIN();
