#include "stagesens/threshold_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace stagesens {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t to_index(int v) { return static_cast<std::size_t>(v); }

double normal_logpdf(double x, double mean, double variance) {
  const double z = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + z * z / variance);
}

double half_normal_logpdf(double x, double scale) {
  if (!(x > 0.0)) {
    return kNegInf;
  }
  return std::log(2.0) + normal_logpdf(x, 0.0, scale * scale);
}

// log P(Z > z) for standard normal Z.
double log_upper_tail(double z) { return std::log(0.5 * std::erfc(z / std::numbers::sqrt2)); }

Matrix block_of(const Matrix& sigma, const std::vector<int>& coords) {
  const auto d = static_cast<Eigen::Index>(coords.size());
  Matrix out(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      out(a, b) = sigma(coords[to_index(static_cast<int>(a))], coords[to_index(static_cast<int>(b))]);
    }
  }
  return out;
}

}  // namespace

CovStructure CovStructure::version(int v) {
  switch (v) {
    case 1: return {CovarianceForm::full, ThresholdLink::boxcox, LocationConstraint::none};
    case 2: return {CovarianceForm::blocks, ThresholdLink::boxcox, LocationConstraint::none};
    case 3: return {CovarianceForm::blocks, ThresholdLink::log, LocationConstraint::none};
    case 4: return {CovarianceForm::location_block, ThresholdLink::boxcox, LocationConstraint::none};
    case 5: return {CovarianceForm::independent, ThresholdLink::boxcox, LocationConstraint::none};
    case 6:
      return {CovarianceForm::location_block, ThresholdLink::boxcox, LocationConstraint::ordered};
    default: throw std::invalid_argument("model version must be 1..6, got " + std::to_string(v));
  }
}

int CovStructure::version_number() const {
  for (int v = 1; v <= 6; ++v) {
    if (version(v) == *this) {
      return v;
    }
  }
  throw std::invalid_argument("covariance form, link and constraint do not match a model version");
}

ThresholdModel::ThresholdModel(const Dataset& d, CovStructure cov, ThresholdPriors priors)
    : data_(compile(d)), cov_(cov), priors_(priors) {
  if (data_.kind != TestKind::multi_threshold) {
    throw std::invalid_argument("threshold model needs a multi-threshold dataset");
  }
  cov_.version_number();
  const int k = states();
  std::vector<int> loc(to_index(k));
  std::vector<int> scale(to_index(k));
  for (int j = 0; j < k; ++j) {
    loc[to_index(j)] = j;
    scale[to_index(j)] = k + j;
  }
  auto sd_groups = [&](const std::vector<int>& coords, const std::string& prefix) {
    for (std::size_t j = 0; j < coords.size(); ++j) {
      groups_.push_back({false, {coords[j]}, prefix + "[" + std::to_string(j) + "]"});
    }
  };
  switch (cov_.form) {
    case CovarianceForm::full: {
      std::vector<int> all = loc;
      all.insert(all.end(), scale.begin(), scale.end());
      groups_.push_back({true, all, "Sigma"});
      break;
    }
    case CovarianceForm::blocks:
      groups_.push_back({true, loc, "Sigma_loc"});
      groups_.push_back({true, scale, "Sigma_scale"});
      break;
    case CovarianceForm::location_block:
      groups_.push_back({true, loc, "Sigma_loc"});
      sd_groups(scale, "sd_scale");
      break;
    case CovarianceForm::independent:
      sd_groups(loc, "sd_loc");
      sd_groups(scale, "sd_scale");
      break;
  }

  const std::size_t kk = to_index(k);
  layout_.m = 0;
  layout_.cov = 2 * kk;
  std::size_t cov_size = 0;
  for (const auto& g : groups_) {
    cov_size += g.wishart ? g.coords.size() * (g.coords.size() + 1) / 2 : 1;
  }
  layout_.latent = layout_.cov + cov_size;
  layout_.lambda = layout_.latent + data_.study_count() * 2 * kk;
  layout_.q = layout_.lambda + (cov_.estimates_lambda() ? 1 : 0);
  layout_.size = layout_.q + data_.q_count();

  touching_.assign(data_.study_count(), std::vector<std::vector<std::size_t>>(kk));
  q_series_.assign(data_.q_count(), {});
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    const auto& cs = data_.series[s];
    for (const auto& term : cs.mixture) {
      auto& list = touching_[cs.study][to_index(term.state)];
      if (list.empty() || list.back() != s) {
        list.push_back(s);
      }
      if (term.q_slot >= 0) {
        auto& ql = q_series_[to_index(term.q_slot)];
        if (ql.empty() || ql.back() != s) {
          ql.push_back(s);
        }
      }
    }
  }
}

std::string ThresholdModel::label() const {
  return "threshold V" + std::to_string(cov_.version_number());
}

std::size_t ThresholdModel::parameter_count() const noexcept { return layout_.size; }

std::vector<std::string> ThresholdModel::parameter_names() const {
  const int k = states();
  std::vector<std::string> out;
  out.reserve(layout_.size);
  for (int j = 0; j < k; ++j) {
    out.push_back("m_loc[" + std::to_string(j) + "]");
  }
  for (int j = 0; j < k; ++j) {
    out.push_back("m_scale[" + std::to_string(j) + "]");
  }
  for (const auto& g : groups_) {
    if (!g.wishart) {
      out.push_back(g.name);
      continue;
    }
    for (std::size_t a = 0; a < g.coords.size(); ++a) {
      for (std::size_t b = a; b < g.coords.size(); ++b) {
        out.push_back(g.name + "[" + std::to_string(a) + "," + std::to_string(b) + "]");
      }
    }
  }
  for (const auto& sid : data_.studies) {
    for (int j = 0; j < k; ++j) {
      out.push_back("mu[" + sid + "," + std::to_string(j) + "]");
    }
    for (int j = 0; j < k; ++j) {
      out.push_back("logsigma[" + sid + "," + std::to_string(j) + "]");
    }
  }
  if (cov_.estimates_lambda()) {
    out.push_back("lambda");
  }
  for (const auto study : data_.q_studies) {
    out.push_back("q[" + data_.studies[study] + "]");
  }
  return out;
}

ThresholdParams ThresholdModel::unpack(std::span<const double> flat) const {
  if (flat.size() != layout_.size) {
    throw std::invalid_argument("threshold parameter vector has wrong length");
  }
  const int k = states();
  const int k2 = 2 * k;
  const auto n = static_cast<Eigen::Index>(data_.study_count());
  ThresholdParams p;
  p.m.resize(k2);
  for (int c = 0; c < k2; ++c) {
    p.m(c) = flat[to_index(c)];
  }
  p.sigma = Matrix::Zero(k2, k2);
  std::size_t at = layout_.cov;
  for (const auto& g : groups_) {
    if (!g.wishart) {
      const double sd = flat[at++];
      p.sigma(g.coords[0], g.coords[0]) = sd * sd;
      continue;
    }
    for (std::size_t a = 0; a < g.coords.size(); ++a) {
      for (std::size_t b = a; b < g.coords.size(); ++b) {
        p.sigma(g.coords[a], g.coords[b]) = p.sigma(g.coords[b], g.coords[a]) = flat[at++];
      }
    }
  }
  p.mu.resize(n, k);
  p.logsigma.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      p.mu(i, j) = flat[at++];
    }
    for (int j = 0; j < k; ++j) {
      p.logsigma(i, j) = flat[at++];
    }
  }
  p.lambda = cov_.estimates_lambda() ? flat[layout_.lambda] : 0.0;
  p.q.assign(flat.begin() + static_cast<std::ptrdiff_t>(layout_.q), flat.end());
  return p;
}

std::vector<double> ThresholdModel::pack(const ThresholdParams& p) const {
  const int k = states();
  std::vector<double> out;
  out.reserve(layout_.size);
  for (int c = 0; c < 2 * k; ++c) {
    out.push_back(p.m(c));
  }
  for (const auto& g : groups_) {
    if (!g.wishart) {
      out.push_back(std::sqrt(p.sigma(g.coords[0], g.coords[0])));
      continue;
    }
    for (std::size_t a = 0; a < g.coords.size(); ++a) {
      for (std::size_t b = a; b < g.coords.size(); ++b) {
        out.push_back(p.sigma(g.coords[a], g.coords[b]));
      }
    }
  }
  for (Eigen::Index i = 0; i < p.mu.rows(); ++i) {
    for (int j = 0; j < k; ++j) {
      out.push_back(p.mu(i, j));
    }
    for (int j = 0; j < k; ++j) {
      out.push_back(p.logsigma(i, j));
    }
  }
  if (cov_.estimates_lambda()) {
    out.push_back(p.lambda);
  }
  out.insert(out.end(), p.q.begin(), p.q.end());
  if (out.size() != layout_.size) {
    throw std::invalid_argument("threshold parameters do not match the dataset layout");
  }
  return out;
}

std::vector<double> ThresholdModel::transformed_thresholds(std::size_t series, double lambda) const {
  const auto& c = data_.series[series].thresholds;
  std::vector<double> f(c.size());
  for (std::size_t t = 0; t < c.size(); ++t) {
    f[t] = boxcox(c[t], lambda);
  }
  return f;
}

double ThresholdModel::series_loglik(std::size_t series, const ThresholdParams& p,
                                     std::span<const double> f) const {
  const auto& s = data_.series[series];
  const auto row = static_cast<Eigen::Index>(s.study);
  return stagesens::series_loglik(s, p.q, [&](int state, std::size_t t) {
    return (p.mu(row, state) - f[t]) * std::exp(-p.logsigma(row, state));
  });
}

double ThresholdModel::series_loglik(std::size_t series, const ThresholdParams& p) const {
  const auto f = transformed_thresholds(series, p.lambda);
  return series_loglik(series, p, f);
}

double ThresholdModel::m_log_prior(const Vector& m) const {
  const int k = states();
  const double var = priors_.m_variance;
  if (!cov_.ordered()) {
    double lp = 0.0;
    for (Eigen::Index c = 0; c < m.size(); ++c) {
      lp += normal_logpdf(m(c), priors_.m_mean, var);
    }
    return lp;
  }
  const double sd = std::sqrt(var);
  double lp = 0.0;
  for (int j = 0; j < k; ++j) {
    lp += normal_logpdf(m(j), priors_.m_mean, var);
    if (j >= 2) {
      if (!(m(j) > m(j - 1))) {
        return kNegInf;
      }
      lp -= log_upper_tail((m(j - 1) - priors_.m_mean) / sd);
    }
  }
  lp += normal_logpdf(m(k), priors_.m_mean, var);
  if (k > 1) {
    lp += normal_logpdf(m(k + 1), priors_.m_mean, var);
    for (int j = 2; j < k; ++j) {
      if (m(k + j) != m(k + 1)) {
        return kNegInf;
      }
    }
  }
  return lp;
}

double ThresholdModel::sigma_log_prior(const Matrix& sigma) const {
  double lp = 0.0;
  for (const auto& g : groups_) {
    if (g.wishart) {
      const auto d = static_cast<Eigen::Index>(g.coords.size());
      lp += inverse_wishart_logpdf(block_of(sigma, g.coords), Matrix::Identity(d, d),
                                   static_cast<double>(d));
    } else {
      lp += half_normal_logpdf(std::sqrt(sigma(g.coords[0], g.coords[0])), priors_.half_normal_scale);
    }
  }
  return lp;
}

LogPosteriorTerms ThresholdModel::terms(const ThresholdParams& p) const {
  LogPosteriorTerms t;
  if (cov_.estimates_lambda() && !(p.lambda >= kLambdaMin && p.lambda <= kLambdaMax)) {
    t.prior = kNegInf;
    return t;
  }
  for (const double q : p.q) {
    if (!(q > 0.0 && q < 1.0)) {
      t.prior = kNegInf;
      return t;
    }
  }
  t.prior = m_log_prior(p.m) + sigma_log_prior(p.sigma);
  if (cov_.estimates_lambda()) {
    t.prior -= std::log(kLambdaMax - kLambdaMin);
  }
  const auto llt = cholesky(p.sigma);
  if (!llt || !std::isfinite(t.prior)) {
    t.prior = kNegInf;
    return t;
  }
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    t.log_likelihood += series_loglik(s, p);
  }
  for (Eigen::Index i = 0; i < p.mu.rows(); ++i) {
    Vector theta(p.m.size());
    theta << p.mu.row(i).transpose(), p.logsigma.row(i).transpose();
    t.random_effects += mvn_logpdf(theta, p.m, *llt);
  }
  return t;
}

double ThresholdModel::log_posterior(std::span<const double> params) const {
  std::size_t at = layout_.cov;
  for (const auto& g : groups_) {
    if (!g.wishart) {
      if (!(params[at] > 0.0)) {
        return kNegInf;
      }
      ++at;
    } else {
      at += g.coords.size() * (g.coords.size() + 1) / 2;
    }
  }
  const double v = terms(unpack(params)).total();
  return std::isnan(v) ? kNegInf : v;
}

std::vector<std::string> ThresholdModel::support_violations(std::span<const double> params) const {
  std::vector<std::string> out;
  const int k = states();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i])) {
      out.push_back("non-finite parameter at index " + std::to_string(i));
    }
  }
  const auto p = unpack(params);
  std::size_t at = layout_.cov;
  for (const auto& g : groups_) {
    if (g.wishart) {
      if (!cholesky(block_of(p.sigma, g.coords))) {
        out.push_back(g.name + " is not positive definite");
      }
      at += g.coords.size() * (g.coords.size() + 1) / 2;
    } else {
      if (!(params[at] > 0.0)) {
        out.push_back(g.name + " is not positive");
      }
      ++at;
    }
  }
  if (cov_.estimates_lambda() && !(p.lambda >= kLambdaMin && p.lambda <= kLambdaMax)) {
    out.push_back("lambda outside [-3, 3]");
  }
  for (std::size_t i = 0; i < p.q.size(); ++i) {
    if (!(p.q[i] > 0.0 && p.q[i] < 1.0)) {
      out.push_back("q[" + data_.studies[data_.q_studies[i]] + "] outside (0, 1)");
    }
  }
  if (cov_.ordered()) {
    for (int j = 2; j < k; ++j) {
      if (!(p.m(j) > p.m(j - 1))) {
        out.push_back("stage locations not ordered at stage " + std::to_string(j));
      }
      if (p.m(k + j) != p.m(k + 1)) {
        out.push_back("stage scale means not shared at stage " + std::to_string(j));
      }
    }
  }
  if (out.empty() && !std::isfinite(log_posterior(params))) {
    out.push_back("log-posterior is not finite");
  }
  return out;
}

double ThresholdModel::log_likelihood(std::span<const double> params) const {
  const auto p = unpack(params);
  double total = 0.0;
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    total += series_loglik(s, p);
  }
  return total;
}

std::vector<double> ThresholdModel::series_deviance(std::span<const double> params) const {
  const auto p = unpack(params);
  std::vector<double> out(data_.series.size());
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    out[s] = 2.0 * (data_.series[s].saturated_loglik - series_loglik(s, p));
  }
  return out;
}

std::vector<std::vector<double>> ThresholdModel::positive_probabilities(
    std::span<const double> params, std::span<const double> grid) const {
  const double lambda = cov_.estimates_lambda() ? params[layout_.lambda] : 0.0;
  return summary_curves(params.subspan(0, to_index(2 * states())), lambda, grid);
}

std::vector<mcmc::BlockSpec> ThresholdModel::proposal_blocks() const {
  const int k = states();
  std::vector<mcmc::BlockSpec> out;
  for (const auto& sid : data_.studies) {
    for (int j = 0; j < k; ++j) {
      out.push_back({"mu[" + sid + "," + std::to_string(j) + "]", 1, 0.5});
    }
    for (int j = 0; j < k; ++j) {
      out.push_back({"logsigma[" + sid + "," + std::to_string(j) + "]", 1, 0.3});
    }
  }
  for (const auto study : data_.q_studies) {
    out.push_back({"logit q[" + data_.studies[study] + "]", 1, 1.0});
  }
  if (cov_.estimates_lambda()) {
    out.push_back({"lambda", 1, 0.1});
    out.push_back({"lambda (rescaled)", 1, 0.1});
  }
  for (const auto& g : groups_) {
    if (!g.wishart) {
      out.push_back({"log " + g.name, 1, 0.3});
    }
  }
  if (cov_.ordered()) {
    for (int j = 0; j < k; ++j) {
      out.push_back({"m_loc[" + std::to_string(j) + "]", 1, 0.5});
    }
    out.push_back({"m_scale[0]", 1, 0.3});
    if (k > 1) {
      out.push_back({"m_scale[stages]", 1, 0.3});
    }
  }
  for (const auto& g : shift_groups()) {
    out.push_back({"shift " + g.name, 1, 0.2});
  }
  return out;
}

std::vector<ThresholdModel::ShiftGroup> ThresholdModel::shift_groups() const {
  const int k = states();
  std::vector<ShiftGroup> out;
  for (int j = 0; j < k; ++j) {
    out.push_back({{j}, "m_loc[" + std::to_string(j) + "]"});
  }
  out.push_back({{k}, "m_scale[0]"});
  if (cov_.ordered()) {
    if (k > 1) {
      ShiftGroup shared{{}, "m_scale[stages]"};
      for (int j = 1; j < k; ++j) {
        shared.coords.push_back(k + j);
      }
      out.push_back(std::move(shared));
    }
  } else {
    for (int j = 1; j < k; ++j) {
      out.push_back({{k + j}, "m_scale[" + std::to_string(j) + "]"});
    }
  }
  return out;
}

namespace {

class ThresholdKernel final : public mcmc::ChainKernel {
 public:
  ThresholdKernel(const ThresholdModel& model, ThresholdParams start)
      : model_(model),
        data_(model.data()),
        p_(std::move(start)),
        k_(model.states()),
        k2_(2 * model.states()) {
    refresh_sigma();
    const std::size_t ns = data_.series.size();
    f_.resize(ns);
    cache_.resize(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      f_[s] = model_.transformed_thresholds(s, p_.lambda);
      cache_[s] = model_.series_loglik(s, p_, f_[s]);
    }
    const auto n = data_.study_count();
    block_q_ = n * static_cast<std::size_t>(k2_);
    block_lambda_ = block_q_ + p_.q.size();
    block_sd_ = block_lambda_ + (model_.structure().estimates_lambda() ? 2 : 0);
    double log_sum = 0.0;
    std::size_t count = 0;
    for (const auto& cs : data_.series) {
      for (const double c : cs.thresholds) {
        log_sum += std::log(c);
        ++count;
      }
    }
    reference_ = count > 0 ? std::exp(log_sum / static_cast<double>(count)) : 1.0;
    std::size_t sd_count = 0;
    for (const auto& g : model_.groups()) {
      sd_count += g.wishart ? 0 : 1;
    }
    block_m_ = block_sd_ + sd_count;
    const std::size_t m_blocks = static_cast<std::size_t>(k_) + (k_ > 1 ? 2 : 1);
    block_shift_ = block_m_ + (model_.structure().ordered() ? m_blocks : 0);
    shifts_ = model_.shift_groups();
    shift_series_.resize(shifts_.size());
    for (std::size_t g = 0; g < shifts_.size(); ++g) {
      std::vector<std::size_t> all;
      for (const int c : shifts_[g].coords) {
        for (std::size_t i = 0; i < data_.study_count(); ++i) {
          const auto& t = model_.series_touching(i, c % k_);
          all.insert(all.end(), t.begin(), t.end());
        }
      }
      std::sort(all.begin(), all.end());
      all.erase(std::unique(all.begin(), all.end()), all.end());
      shift_series_[g] = std::move(all);
    }
  }

  void sweep(mcmc::ChainState& state) override {
    update_latents(state);
    update_q(state);
    if (model_.structure().estimates_lambda()) {
      update_lambda(state);
      update_lambda_rescaled(state);
    }
    if (model_.structure().ordered()) {
      update_m_ordered(state);
    } else {
      update_m_gibbs(state);
    }
    update_shifts(state);
    update_sigma(state);
  }

  void write(std::span<double> out) const override {
    const auto flat = model_.pack(p_);
    std::copy(flat.begin(), flat.end(), out.begin());
  }

 private:
  Vector theta(Eigen::Index i) const {
    Vector t(k2_);
    t << p_.mu.row(i).transpose(), p_.logsigma.row(i).transpose();
    return t;
  }

  double& coord(Eigen::Index i, int c) {
    return c < k_ ? p_.mu(i, c) : p_.logsigma(i, c - k_);
  }

  double touched_loglik(const std::vector<std::size_t>& series) {
    double delta = 0.0;
    fresh_.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
      fresh_[i] = model_.series_loglik(series[i], p_, f_[series[i]]);
      delta += fresh_[i] - cache_[series[i]];
    }
    return delta;
  }

  void commit(const std::vector<std::size_t>& series) {
    for (std::size_t i = 0; i < series.size(); ++i) {
      cache_[series[i]] = fresh_[i];
    }
  }

  void update_latents(mcmc::ChainState& state) {
    const auto n = static_cast<Eigen::Index>(data_.study_count());
    std::size_t block = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector r = theta(i) - p_.m;
      Vector pr = precision_ * r;
      for (int c = 0; c < k2_; ++c, ++block) {
        const double delta = state.step(block);
        double& x = coord(i, c);
        const double old = x;
        const auto& touched = model_.series_touching(static_cast<std::size_t>(i), c % k_);
        x = old + delta;
        const double dll = touched_loglik(touched);
        const double dre = -0.5 * (2.0 * delta * pr(c) + delta * delta * precision_(c, c));
        if (state.accept(block, dll + dre)) {
          commit(touched);
          pr += delta * precision_.col(c);
        } else {
          x = old;
        }
      }
    }
  }

  void update_q(mcmc::ChainState& state) {
    for (std::size_t slot = 0; slot < p_.q.size(); ++slot) {
      const std::size_t block = block_q_ + slot;
      const double old = p_.q[slot];
      const double proposed = inverse_logit(logit(old) + state.step(block));
      if (!(proposed > 0.0 && proposed < 1.0)) {
        state.accept(block, kNegInf);
        continue;
      }
      const auto& touched = model_.series_with_q(slot);
      p_.q[slot] = proposed;
      const double dll = touched_loglik(touched);
      const double jac = std::log(proposed) + std::log1p(-proposed) - std::log(old) - std::log1p(-old);
      if (state.accept(block, dll + jac)) {
        commit(touched);
      } else {
        p_.q[slot] = old;
      }
    }
  }

  void update_lambda(mcmc::ChainState& state) {
    const double proposed = p_.lambda + state.step(block_lambda_);
    if (!(proposed >= kLambdaMin && proposed <= kLambdaMax)) {
      state.accept(block_lambda_, kNegInf);
      return;
    }
    const double old = p_.lambda;
    p_.lambda = proposed;
    const std::size_t ns = data_.series.size();
    std::vector<std::vector<double>> f(ns);
    std::vector<double> ll(ns);
    double delta = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      f[s] = model_.transformed_thresholds(s, proposed);
      ll[s] = model_.series_loglik(s, p_, f[s]);
      delta += ll[s] - cache_[s];
    }
    if (state.accept(block_lambda_, delta)) {
      f_ = std::move(f);
      cache_ = std::move(ll);
    } else {
      p_.lambda = old;
    }
  }

  // Moves lambda together with an affine map of every location (and a shift
  // of every log-scale) chosen so that positivity curves are unchanged to
  // first order at the reference threshold.
  void update_lambda_rescaled(mcmc::ChainState& state) {
    const std::size_t block = block_lambda_ + 1;
    const double proposed = p_.lambda + state.step(block);
    if (!(proposed >= kLambdaMin && proposed <= kLambdaMax)) {
      state.accept(block, kNegInf);
      return;
    }
    const double b = std::pow(reference_, proposed - p_.lambda);
    const double a = boxcox(reference_, proposed) - b * boxcox(reference_, p_.lambda);
    const double log_b = std::log(b);
    ThresholdParams next = p_;
    next.lambda = proposed;
    next.mu = (b * p_.mu.array() + a).matrix();
    next.logsigma = (p_.logsigma.array() + log_b).matrix();
    next.m.head(k_) = (b * p_.m.head(k_).array() + a).matrix();
    next.m.tail(k_) = (p_.m.tail(k_).array() + log_b).matrix();
    Vector d = Vector::Ones(k2_);
    d.head(k_).setConstant(b);
    next.sigma = d.asDiagonal() * p_.sigma * d.asDiagonal();

    double scaled = static_cast<double>((p_.mu.rows() + 1) * k_);
    for (const auto& g : model_.groups()) {
      if (!g.wishart) {
        scaled += g.coords[0] < k_ ? 1.0 : 0.0;
        continue;
      }
      for (std::size_t u = 0; u < g.coords.size(); ++u) {
        for (std::size_t v = u; v < g.coords.size(); ++v) {
          scaled += (g.coords[u] < k_ ? 1.0 : 0.0) + (g.coords[v] < k_ ? 1.0 : 0.0);
        }
      }
    }
    const double current = model_.terms(p_).total();
    const double value = model_.terms(next).total();
    if (state.accept(block, value - current + scaled * log_b)) {
      p_ = std::move(next);
      refresh_sigma();
      for (std::size_t s = 0; s < data_.series.size(); ++s) {
        f_[s] = model_.transformed_thresholds(s, p_.lambda);
        cache_[s] = model_.series_loglik(s, p_, f_[s]);
      }
    }
  }

  Vector latent_mean() const {
    Vector mean = Vector::Zero(k2_);
    const auto n = p_.mu.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
      mean += theta(i);
    }
    return n > 0 ? Vector(mean / static_cast<double>(n)) : mean;
  }

  void update_m_gibbs(mcmc::ChainState& state) {
    const auto& pri = model_.priors();
    const double n = static_cast<double>(p_.mu.rows());
    Matrix post = n * precision_;
    post.diagonal().array() += 1.0 / pri.m_variance;
    Vector b = Vector::Constant(k2_, pri.m_mean / pri.m_variance);
    if (n > 0) {
      b += n * (precision_ * latent_mean());
    }
    const Eigen::LLT<Matrix> llt(post);
    const Vector mean = llt.solve(b);
    p_.m = sample_mvn_precision(mean, llt, state.rng());
  }

  double m_conditional(const Vector& m, const Vector& ebar, double n) const {
    const double prior = model_.m_log_prior(m);
    if (!std::isfinite(prior)) {
      return kNegInf;
    }
    const Vector d = m - ebar;
    return prior - 0.5 * n * d.dot(precision_ * d);
  }

  void update_m_ordered(mcmc::ChainState& state) {
    const double n = static_cast<double>(p_.mu.rows());
    const Vector ebar = latent_mean();
    double current = m_conditional(p_.m, ebar, n);
    std::size_t block = block_m_;
    auto move = [&](const std::vector<int>& coords) {
      const double delta = state.step(block);
      Vector proposed = p_.m;
      for (const int c : coords) {
        proposed(c) += delta;
      }
      const double value = m_conditional(proposed, ebar, n);
      if (state.accept(block, value - current)) {
        p_.m = std::move(proposed);
        current = value;
      }
      ++block;
    };
    for (int j = 0; j < k_; ++j) {
      move({j});
    }
    move({k_});
    if (k_ > 1) {
      std::vector<int> shared;
      for (int j = 1; j < k_; ++j) {
        shared.push_back(k_ + j);
      }
      move(shared);
    }
  }

  // Translates a hyper-mean together with the matching latent coordinate of
  // every study; the random-effects density is invariant under the move.
  void update_shifts(mcmc::ChainState& state) {
    const auto n = p_.mu.rows();
    double prior = model_.m_log_prior(p_.m);
    for (std::size_t g = 0; g < shifts_.size(); ++g) {
      const std::size_t block = block_shift_ + g;
      const double delta = state.step(block);
      const auto& coords = shifts_[g].coords;
      auto apply = [&](double by) {
        for (const int c : coords) {
          p_.m(c) += by;
          for (Eigen::Index i = 0; i < n; ++i) {
            coord(i, c) += by;
          }
        }
      };
      apply(delta);
      const double proposed_prior = model_.m_log_prior(p_.m);
      if (!std::isfinite(proposed_prior)) {
        apply(-delta);
        state.accept(block, kNegInf);
        continue;
      }
      const double dll = touched_loglik(shift_series_[g]);
      if (state.accept(block, dll + proposed_prior - prior)) {
        commit(shift_series_[g]);
        prior = proposed_prior;
      } else {
        apply(-delta);
      }
    }
  }

  void update_sigma(mcmc::ChainState& state) {
    const auto n = p_.mu.rows();
    Matrix resid(n, k2_);
    for (Eigen::Index i = 0; i < n; ++i) {
      resid.row(i) = (theta(i) - p_.m).transpose();
    }
    std::size_t sd_block = block_sd_;
    const double hn = model_.priors().half_normal_scale;
    for (const auto& g : model_.groups()) {
      if (g.wishart) {
        const auto d = static_cast<Eigen::Index>(g.coords.size());
        Matrix scale = Matrix::Identity(d, d);
        for (Eigen::Index i = 0; i < n; ++i) {
          Vector r(d);
          for (Eigen::Index a = 0; a < d; ++a) {
            r(a) = resid(i, g.coords[static_cast<std::size_t>(a)]);
          }
          scale.noalias() += r * r.transpose();
        }
        for (int attempt = 0; attempt < 10; ++attempt) {
          const Matrix draw =
              sample_inverse_wishart(scale, static_cast<double>(d + n), state.rng());
          if (cholesky(draw)) {
            for (Eigen::Index a = 0; a < d; ++a) {
              for (Eigen::Index b = 0; b < d; ++b) {
                p_.sigma(g.coords[static_cast<std::size_t>(a)], g.coords[static_cast<std::size_t>(b)]) =
                    draw(a, b);
              }
            }
            break;
          }
        }
        continue;
      }
      const int c = g.coords[0];
      const double ss = resid.col(c).squaredNorm();
      const double nn = static_cast<double>(n);
      auto target = [&](double u) {
        const double sd = std::exp(u);
        return -nn * u - ss / (2.0 * sd * sd) - sd * sd / (2.0 * hn * hn) + u;
      };
      const double u_old = 0.5 * std::log(p_.sigma(c, c));
      const double u_new = u_old + state.step(sd_block);
      if (state.accept(sd_block, target(u_new) - target(u_old))) {
        p_.sigma(c, c) = std::exp(2.0 * u_new);
      }
      ++sd_block;
    }
    refresh_sigma();
  }

  void refresh_sigma() {
    const auto llt = cholesky(p_.sigma);
    if (!llt) {
      throw mcmc::SamplerFault("threshold chain: Sigma is not positive definite");
    }
    precision_ = llt->solve(Matrix::Identity(k2_, k2_));
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
  }

  const ThresholdModel& model_;
  const CompiledData& data_;
  ThresholdParams p_;
  int k_;
  int k2_;
  Matrix precision_;
  std::vector<std::vector<double>> f_;
  std::vector<double> cache_;
  std::vector<double> fresh_;
  std::size_t block_q_ = 0;
  std::size_t block_lambda_ = 0;
  std::size_t block_sd_ = 0;
  std::size_t block_m_ = 0;
  std::size_t block_shift_ = 0;
  std::vector<ThresholdModel::ShiftGroup> shifts_;
  std::vector<std::vector<std::size_t>> shift_series_;
  double reference_ = 1.0;
};

}  // namespace

std::unique_ptr<mcmc::ChainKernel> ThresholdModel::start_chain(Rng& rng) const {
  const int k = states();
  const auto n = static_cast<Eigen::Index>(data_.study_count());
  double center = priors_.m_mean;
  if (!data_.series.empty()) {
    center = 0.5 * (std::log(data_.min_threshold) + std::log(data_.max_threshold));
  }
  ThresholdParams p;
  p.m.resize(2 * k);
  for (int j = 0; j < k; ++j) {
    p.m(j) = center + rng.normal();
    p.m(k + j) = 0.1 * rng.normal();
  }
  if (cov_.ordered()) {
    std::sort(p.m.data() + 1, p.m.data() + k);
    for (int j = 2; j < k; ++j) {
      p.m(k + j) = p.m(k + 1);
    }
  }
  p.sigma = Matrix::Identity(2 * k, 2 * k);
  p.mu.resize(n, k);
  p.logsigma.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      p.mu(i, j) = p.m(j) + 0.1 * rng.normal();
      p.logsigma(i, j) = p.m(k + j) + 0.1 * rng.normal();
    }
  }
  p.lambda = cov_.estimates_lambda() ? 0.05 * rng.normal() : 0.0;
  p.q.resize(data_.q_count());
  for (auto& q : p.q) {
    q = inverse_logit(0.1 * rng.normal());
  }
  return std::make_unique<ThresholdKernel>(*this, std::move(p));
}

double log_posterior_threshold(const ThresholdParams& p, const Dataset& d, const CovStructure& cov,
                               const ThresholdPriors& priors) {
  const ThresholdModel model(d, cov, priors);
  return model.log_posterior(model.pack(p));
}

std::vector<std::vector<double>> summary_curves(std::span<const double> m, double lambda,
                                                std::span<const double> grid) {
  if (m.size() % 2 != 0) {
    throw std::invalid_argument("summary_curves: m must hold locations and log-scales");
  }
  const std::size_t k = m.size() / 2;
  std::vector<std::vector<double>> out(k, std::vector<double>(grid.size()));
  for (std::size_t j = 0; j < k; ++j) {
    const double scale = std::exp(m[k + j]);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      out[j][g] = positivity_prob(m[j], scale, grid[g], lambda);
    }
  }
  return out;
}

}  // namespace stagesens
