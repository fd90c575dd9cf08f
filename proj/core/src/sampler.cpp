#include "stagesens/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace stagesens::mcmc {

void SamplerConfig::validate() const {
  if (chains < 1) {
    throw std::invalid_argument("sampler.chains must be >= 1");
  }
  if (thin < 1) {
    throw std::invalid_argument("sampler.thin must be >= 1");
  }
  if (burn_in < 0) {
    throw std::invalid_argument("sampler.burn_in must be >= 0");
  }
  if (iterations <= burn_in) {
    throw std::invalid_argument("sampler.iterations must exceed sampler.burn_in");
  }
  if (adapt_window < 1) {
    throw std::invalid_argument("sampler.adapt_window must be >= 1");
  }
  if (!(target_accept_scalar > 0.0 && target_accept_scalar < 1.0)) {
    throw std::invalid_argument("sampler.target_accept_scalar must lie in (0, 1)");
  }
  if (!(target_accept_vector > 0.0 && target_accept_vector < 1.0)) {
    throw std::invalid_argument("sampler.target_accept_vector must lie in (0, 1)");
  }
  if (stored_per_chain() < 1) {
    throw std::invalid_argument("sampler settings store no draws");
  }
}

std::vector<std::string> Model::support_violations(std::span<const double> params) const {
  if (std::isfinite(log_posterior(params))) {
    return {};
  }
  return {"log-posterior is not finite"};
}

ChainState::ChainState(std::uint64_t seed, int chain, const std::vector<BlockSpec>& blocks,
                       const SamplerConfig& cfg)
    : rng_(seed, static_cast<std::uint64_t>(chain)), chain_(chain) {
  blocks_.reserve(blocks.size());
  for (const auto& spec : blocks) {
    ProposalBlock b;
    b.log_scale = std::log(spec.initial_scale);
    b.target = spec.dimension > 1 ? cfg.target_accept_vector : cfg.target_accept_scalar;
    blocks_.push_back(b);
  }
}

double ChainState::scale(std::size_t block) const { return std::exp(blocks_[block].log_scale); }

double ChainState::step(std::size_t block) { return scale(block) * rng_.normal(); }

bool ChainState::accept(std::size_t block, double log_ratio) {
  auto& b = blocks_[block];
  ++b.proposed;
  ++b.window_proposed;
  if (std::isnan(log_ratio)) {
    return false;
  }
  if (log_ratio >= 0.0 || std::log(rng_.uniform()) < log_ratio) {
    ++b.accepted;
    ++b.window_accepted;
    return true;
  }
  return false;
}

void ChainState::adapt() {
  ++adaptations_;
  const double gain = 1.0 / std::sqrt(static_cast<double>(adaptations_));
  for (auto& b : blocks_) {
    if (b.window_proposed > 0) {
      const double rate =
          static_cast<double>(b.window_accepted) / static_cast<double>(b.window_proposed);
      b.log_scale = std::clamp(b.log_scale + gain * (rate - b.target), -25.0, 5.0);
    }
    b.window_proposed = 0;
    b.window_accepted = 0;
  }
}

void ChainState::reset_counters() {
  for (auto& b : blocks_) {
    b.proposed = b.accepted = b.window_proposed = b.window_accepted = 0;
  }
}

std::size_t PosteriorDraws::index_of(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw std::out_of_range("no parameter named " + std::string(name));
  }
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> PosteriorDraws::chain_column(int chain, std::size_t column) const {
  std::vector<double> out(static_cast<std::size_t>(draws_per_chain));
  const Eigen::Index offset = static_cast<Eigen::Index>(chain) * draws_per_chain;
  for (int d = 0; d < draws_per_chain; ++d) {
    out[static_cast<std::size_t>(d)] = values(offset + d, static_cast<Eigen::Index>(column));
  }
  return out;
}

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    out += out.empty() ? s : "; " + s;
  }
  return out;
}

void run_chain(const Model& model, const SamplerConfig& cfg, const std::vector<BlockSpec>& specs,
               int chain, PosteriorDraws& draws) {
  ChainState state(cfg.seed, chain, specs, cfg);
  const std::size_t dim = draws.names.size();
  std::vector<double> buffer(dim);

  std::unique_ptr<ChainKernel> kernel;
  std::vector<std::string> last_violations;
  constexpr int kInitAttempts = 100;
  for (int attempt = 0; attempt < kInitAttempts; ++attempt) {
    kernel = model.start_chain(state.rng());
    kernel->write(buffer);
    if (std::isfinite(model.log_posterior(buffer))) {
      break;
    }
    last_violations = model.support_violations(buffer);
    kernel.reset();
  }
  if (!kernel) {
    throw SamplerFault("chain " + std::to_string(chain) + ": initialization failed after " +
                       std::to_string(kInitAttempts) + " attempts: " + join(last_violations));
  }

  const int stored = cfg.stored_per_chain();
  const Eigen::Index row0 = static_cast<Eigen::Index>(chain) * stored;
  int written = 0;
  for (int it = 0; it < cfg.iterations && written < stored; ++it) {
    kernel->sweep(state);
    if (it < cfg.burn_in) {
      if ((it + 1) % cfg.adapt_window == 0) {
        state.adapt();
      }
      if (it + 1 == cfg.burn_in) {
        state.reset_counters();
      }
      continue;
    }
    if ((it - cfg.burn_in + 1) % cfg.thin != 0) {
      continue;
    }
    kernel->write(buffer);
    if (!std::isfinite(model.log_posterior(buffer))) {
      throw SamplerFault("chain " + std::to_string(chain) + ": non-finite log-posterior at iteration " +
                         std::to_string(it) + ": " + join(model.support_violations(buffer)));
    }
    for (std::size_t p = 0; p < dim; ++p) {
      draws.values(row0 + written, static_cast<Eigen::Index>(p)) = buffer[p];
    }
    ++written;
  }

  auto& report = draws.acceptance[static_cast<std::size_t>(chain)];
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const auto& blk = state.blocks()[b];
    const double rate = blk.proposed > 0 ? static_cast<double>(blk.accepted) /
                                               static_cast<double>(blk.proposed)
                                         : 0.0;
    report.push_back({specs[b].name, rate, std::exp(blk.log_scale)});
  }
}

}  // namespace

PosteriorDraws run(const Model& model, const SamplerConfig& cfg) {
  cfg.validate();
  PosteriorDraws draws;
  draws.names = model.parameter_names();
  draws.chains = cfg.chains;
  draws.draws_per_chain = cfg.stored_per_chain();
  draws.values.resize(static_cast<Eigen::Index>(cfg.chains) * draws.draws_per_chain,
                      static_cast<Eigen::Index>(draws.names.size()));
  draws.acceptance.resize(static_cast<std::size_t>(cfg.chains));
  const auto specs = model.proposal_blocks();

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(cfg.chains));
  for (int c = 0; c < cfg.chains; ++c) {
    workers.emplace_back([&, c] {
      try {
        run_chain(model, cfg, specs, c, draws);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) {
    w.join();
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return draws;
}

std::vector<BlockAcceptance> mean_acceptance(const PosteriorDraws& draws) {
  std::vector<BlockAcceptance> out;
  if (draws.acceptance.empty()) {
    return out;
  }
  out = draws.acceptance.front();
  for (std::size_t c = 1; c < draws.acceptance.size(); ++c) {
    for (std::size_t b = 0; b < out.size(); ++b) {
      out[b].rate += draws.acceptance[c][b].rate;
      out[b].scale += draws.acceptance[c][b].scale;
    }
  }
  for (auto& b : out) {
    b.rate /= static_cast<double>(draws.acceptance.size());
    b.scale /= static_cast<double>(draws.acceptance.size());
  }
  return out;
}

namespace {

class DensityKernel final : public ChainKernel {
 public:
  DensityKernel(std::vector<double> x, const DensityModel::LogDensity& f)
      : x_(std::move(x)), f_(f), current_(f_(x_)) {}

  void sweep(ChainState& state) override {
    for (std::size_t j = 0; j < x_.size(); ++j) {
      const double old = x_[j];
      x_[j] = old + state.step(j);
      const double proposed = f_(x_);
      if (state.accept(j, proposed - current_)) {
        current_ = proposed;
      } else {
        x_[j] = old;
      }
    }
  }

  void write(std::span<double> out) const override { std::copy(x_.begin(), x_.end(), out.begin()); }

 private:
  std::vector<double> x_;
  const DensityModel::LogDensity& f_;
  double current_;
};

}  // namespace

DensityModel::DensityModel(std::vector<std::string> names, std::vector<double> start,
                           LogDensity log_density, double jitter)
    : names_(std::move(names)),
      start_(std::move(start)),
      log_density_(std::move(log_density)),
      jitter_(jitter) {
  if (names_.size() != start_.size()) {
    throw std::invalid_argument("DensityModel: names and start differ in length");
  }
}

std::vector<BlockSpec> DensityModel::proposal_blocks() const {
  std::vector<BlockSpec> out;
  for (const auto& n : names_) {
    out.push_back({n, 1, 1.0});
  }
  return out;
}

std::unique_ptr<ChainKernel> DensityModel::start_chain(Rng& rng) const {
  std::vector<double> x = start_;
  for (auto& v : x) {
    v += jitter_ * rng.normal();
  }
  return std::make_unique<DensityKernel>(std::move(x), log_density_);
}

}  // namespace stagesens::mcmc
