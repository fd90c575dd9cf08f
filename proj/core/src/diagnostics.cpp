#include "stagesens/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <unsupported/Eigen/FFT>

namespace stagesens {

namespace {

using Chains = std::vector<std::vector<double>>;

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

Chains split(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t d = 0; d < chains[c].size(); ++d) {
      pooled.emplace_back(chains[c][d], c * chains[c].size() + d);
    }
  }
  std::sort(pooled.begin(), pooled.end());
  const double s = static_cast<double>(pooled.size());
  std::vector<double> z(pooled.size());
  const boost::math::normal_distribution<double> normal;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) {
      ++j;
    }
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    const double value = boost::math::quantile(normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t t = i; t < j; ++t) {
      z[pooled[t].second] = value;
    }
    i = j;
  }
  Chains out(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const std::size_t n = chains[c].size();
    out[c].assign(z.begin() + static_cast<std::ptrdiff_t>(c * n),
                  z.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
  }
  return out;
}

std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::size_t size = 1;
  while (size < 2 * n) {
    size <<= 1;
  }
  const double mu = mean_of(x);
  std::vector<double> padded(size, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    padded[i] = x[i] - mu;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) {
    f = std::norm(f);
  }
  std::vector<double> back;
  fft.inv(back, freq);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = back[t] / static_cast<double>(n);
  }
  return out;
}

}  // namespace

double potential_scale_reduction(const Chains& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    means.push_back(mu);
    double ss = 0.0;
    for (const double v : c) {
      ss += (v - mu) * (v - mu);
    }
    w += ss / (n - 1.0);
  }
  w /= m;
  const double grand = mean_of(means);
  double b = 0.0;
  for (const double mu : means) {
    b += (mu - grand) * (mu - grand);
  }
  b *= n / (m - 1.0);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const Chains& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double nd = static_cast<double>(n);
  std::vector<std::vector<double>> acov;
  std::vector<double> means;
  for (const auto& c : chains) {
    acov.push_back(autocovariance(c));
    means.push_back(mean_of(c));
  }
  double w = 0.0;
  for (const auto& a : acov) {
    w += a[0] * nd / (nd - 1.0);
  }
  w /= static_cast<double>(m);
  double var_plus = w * (nd - 1.0) / nd;
  if (m > 1) {
    const double grand = mean_of(means);
    double b = 0.0;
    for (const double mu : means) {
      b += (mu - grand) * (mu - grand);
    }
    var_plus += b / static_cast<double>(m - 1);
  }
  auto rho = [&](std::size_t t) {
    double mean_acov = 0.0;
    for (const auto& a : acov) {
      mean_acov += a[t];
    }
    mean_acov /= static_cast<double>(m);
    return 1.0 - (w - mean_acov) / var_plus;
  };
  double tau = -1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (!(pair > 0.0)) {
      break;
    }
    pair = std::min(pair, previous);
    previous = pair;
    tau += 2.0 * pair;
  }
  const double total = static_cast<double>(m) * nd;
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

ParameterDiagnostics diagnose(const Chains& chains) {
  if (chains.size() < static_cast<std::size_t>(kMinDiagnosticChains)) {
    throw std::invalid_argument("diagnostics need at least 2 chains, got " +
                                std::to_string(chains.size()));
  }
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) {
      throw std::invalid_argument("diagnostics need chains of equal length");
    }
  }
  if (n < static_cast<std::size_t>(kMinDiagnosticDraws)) {
    throw std::invalid_argument("diagnostics need at least 100 draws per chain, got " +
                                std::to_string(n));
  }
  ParameterDiagnostics out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::vector<double> pooled;
  for (const auto& c : chains) {
    for (const double v : c) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      pooled.push_back(v);
    }
  }
  if (!(hi > lo)) {
    out.constant = true;
    out.rhat = std::numeric_limits<double>::quiet_NaN();
    out.ess = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Chains halves = split(chains);
  const Chains bulk = rank_normalize(halves);
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2),
                   pooled.end());
  const double median = pooled[pooled.size() / 2];
  Chains folded = halves;
  for (auto& c : folded) {
    for (auto& v : c) {
      v = std::abs(v - median);
    }
  }
  out.rhat = std::max(potential_scale_reduction(bulk),
                      potential_scale_reduction(rank_normalize(folded)));
  out.ess = effective_sample_size(bulk);
  return out;
}

std::vector<ParameterDiagnostics> diagnostics(const mcmc::PosteriorDraws& draws) {
  std::vector<ParameterDiagnostics> out;
  out.reserve(draws.names.size());
  for (std::size_t p = 0; p < draws.names.size(); ++p) {
    Chains chains;
    for (int c = 0; c < draws.chains; ++c) {
      chains.push_back(draws.chain_column(c, p));
    }
    out.push_back(diagnose(chains));
  }
  return out;
}

}  // namespace stagesens
