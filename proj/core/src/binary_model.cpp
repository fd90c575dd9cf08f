#include "stagesens/binary_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stagesens {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t to_index(int v) { return static_cast<std::size_t>(v); }

Matrix identity(int k) { return Matrix::Identity(k, k); }

}  // namespace

double logistic_logpdf(double x, double location, double scale) noexcept {
  const double z = (x - location) / scale;
  // log(e^{-z} / (1 + e^{-z})^2) = -|z| - 2 log1p(e^{-|z|})
  const double a = std::abs(z);
  return -a - 2.0 * std::log1p(std::exp(-a)) - std::log(scale);
}

BinaryModel::BinaryModel(const Dataset& d, BinaryPriors priors)
    : data_(compile(d)), priors_(priors) {
  if (data_.kind != TestKind::binary) {
    throw std::invalid_argument("binary model needs a binary dataset");
  }
  const int k = states();
  if (priors_.wishart_df != 0.0 && priors_.wishart_df < k) {
    throw std::invalid_argument("Inverse-Wishart degrees of freedom must be >= K");
  }
  touching_.assign(data_.study_count(), std::vector<std::vector<std::size_t>>(to_index(k)));
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

double BinaryModel::wishart_df() const noexcept {
  return priors_.wishart_df == 0.0 ? static_cast<double>(states()) : priors_.wishart_df;
}

std::size_t BinaryModel::parameter_count() const noexcept {
  const std::size_t k = to_index(states());
  return k + k * (k + 1) / 2 + data_.study_count() * k + data_.q_count();
}

std::vector<std::string> BinaryModel::parameter_names() const {
  const int k = states();
  std::vector<std::string> out;
  out.reserve(parameter_count());
  for (int j = 0; j < k; ++j) {
    out.push_back("m[" + std::to_string(j) + "]");
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      out.push_back("Sigma[" + std::to_string(a) + "," + std::to_string(b) + "]");
    }
  }
  for (const auto& sid : data_.studies) {
    for (int j = 0; j < k; ++j) {
      out.push_back("eta[" + sid + "," + std::to_string(j) + "]");
    }
  }
  for (const auto study : data_.q_studies) {
    out.push_back("q[" + data_.studies[study] + "]");
  }
  return out;
}

BinaryParams BinaryModel::unpack(std::span<const double> flat) const {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("binary parameter vector has wrong length");
  }
  const int k = states();
  const auto n = static_cast<Eigen::Index>(data_.study_count());
  BinaryParams p;
  p.m.resize(k);
  p.sigma.resize(k, k);
  p.eta.resize(n, k);
  std::size_t at = 0;
  for (int j = 0; j < k; ++j) {
    p.m(j) = flat[at++];
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      p.sigma(a, b) = p.sigma(b, a) = flat[at++];
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      p.eta(i, j) = flat[at++];
    }
  }
  p.q.assign(flat.begin() + static_cast<std::ptrdiff_t>(at), flat.end());
  return p;
}

std::vector<double> BinaryModel::pack(const BinaryParams& p) const {
  const int k = states();
  std::vector<double> out;
  out.reserve(parameter_count());
  for (int j = 0; j < k; ++j) {
    out.push_back(p.m(j));
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      out.push_back(p.sigma(a, b));
    }
  }
  for (Eigen::Index i = 0; i < p.eta.rows(); ++i) {
    for (int j = 0; j < k; ++j) {
      out.push_back(p.eta(i, j));
    }
  }
  out.insert(out.end(), p.q.begin(), p.q.end());
  if (out.size() != parameter_count()) {
    throw std::invalid_argument("binary parameters do not match the dataset layout");
  }
  return out;
}

double BinaryModel::series_loglik(std::size_t series, const BinaryParams& p) const {
  const auto& s = data_.series[series];
  const auto row = static_cast<Eigen::Index>(s.study);
  return stagesens::series_loglik(s, p.q, [&](int state, std::size_t) { return p.eta(row, state); });
}

LogPosteriorTerms BinaryModel::terms(const BinaryParams& p) const {
  LogPosteriorTerms t;
  const int k = states();
  for (const double q : p.q) {
    if (!(q > 0.0 && q < 1.0)) {
      t.prior = kNegInf;
      return t;
    }
  }
  const auto llt = cholesky(p.sigma);
  if (!llt) {
    t.prior = kNegInf;
    return t;
  }
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    t.log_likelihood += series_loglik(s, p);
  }
  for (Eigen::Index i = 0; i < p.eta.rows(); ++i) {
    t.random_effects += mvn_logpdf(p.eta.row(i).transpose(), p.m, *llt);
  }
  for (int j = 0; j < k; ++j) {
    t.prior += logistic_logpdf(p.m(j), priors_.m_location, priors_.m_scale);
  }
  t.prior += inverse_wishart_logpdf(p.sigma, identity(k), wishart_df());
  return t;
}

double BinaryModel::log_posterior(std::span<const double> params) const {
  const double v = terms(unpack(params)).total();
  return std::isnan(v) ? kNegInf : v;
}

std::vector<std::string> BinaryModel::support_violations(std::span<const double> params) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i])) {
      out.push_back("non-finite parameter at index " + std::to_string(i));
    }
  }
  const auto p = unpack(params);
  if (!cholesky(p.sigma)) {
    out.push_back("Sigma is not positive definite");
  }
  for (std::size_t i = 0; i < p.q.size(); ++i) {
    if (!(p.q[i] > 0.0 && p.q[i] < 1.0)) {
      out.push_back("q[" + data_.studies[data_.q_studies[i]] + "] outside (0, 1)");
    }
  }
  if (out.empty() && !std::isfinite(log_posterior(params))) {
    out.push_back("log-posterior is not finite");
  }
  return out;
}

double BinaryModel::log_likelihood(std::span<const double> params) const {
  const auto p = unpack(params);
  double total = 0.0;
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    total += series_loglik(s, p);
  }
  return total;
}

std::vector<double> BinaryModel::series_deviance(std::span<const double> params) const {
  const auto p = unpack(params);
  std::vector<double> out(data_.series.size());
  for (std::size_t s = 0; s < data_.series.size(); ++s) {
    out[s] = 2.0 * (data_.series[s].saturated_loglik - series_loglik(s, p));
  }
  return out;
}

std::vector<std::vector<double>> BinaryModel::positive_probabilities(
    std::span<const double> params, std::span<const double>) const {
  const int k = states();
  std::vector<std::vector<double>> out(to_index(k));
  for (int j = 0; j < k; ++j) {
    out[to_index(j)] = {inverse_logit(params[to_index(j)])};
  }
  return out;
}

std::vector<mcmc::BlockSpec> BinaryModel::proposal_blocks() const {
  const int k = states();
  std::vector<mcmc::BlockSpec> out;
  for (const auto& sid : data_.studies) {
    for (int j = 0; j < k; ++j) {
      out.push_back({"eta[" + sid + "," + std::to_string(j) + "]", 1, 1.0});
    }
  }
  for (const auto study : data_.q_studies) {
    out.push_back({"logit q[" + data_.studies[study] + "]", 1, 1.0});
  }
  for (int j = 0; j < k; ++j) {
    out.push_back({"m[" + std::to_string(j) + "]", 1, 0.5});
  }
  out.push_back({"m (independence)", k, 1.0});
  return out;
}

namespace {

// Block order: eta (study-major), logit q, m, joint m. Sigma is drawn by Gibbs.
class BinaryKernel final : public mcmc::ChainKernel {
 public:
  BinaryKernel(const BinaryModel& model, BinaryParams start)
      : model_(model), data_(model.data()), p_(std::move(start)), k_(model.states()) {
    refresh_sigma();
    cache_.resize(data_.series.size());
    for (std::size_t s = 0; s < cache_.size(); ++s) {
      cache_[s] = model_.series_loglik(s, p_);
    }
  }

  void sweep(mcmc::ChainState& state) override {
    update_eta(state);
    update_q(state);
    update_m(state);
    update_sigma(state);
  }

  void write(std::span<double> out) const override {
    const auto flat = model_.pack(p_);
    std::copy(flat.begin(), flat.end(), out.begin());
  }

 private:
  double touched_loglik(const std::vector<std::size_t>& series, std::vector<double>& fresh) const {
    double delta = 0.0;
    fresh.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
      fresh[i] = model_.series_loglik(series[i], p_);
      delta += fresh[i] - cache_[series[i]];
    }
    return delta;
  }

  void commit(const std::vector<std::size_t>& series, const std::vector<double>& fresh) {
    for (std::size_t i = 0; i < series.size(); ++i) {
      cache_[series[i]] = fresh[i];
    }
  }

  void update_eta(mcmc::ChainState& state) {
    const auto n = static_cast<Eigen::Index>(data_.study_count());
    std::size_t block = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector r = p_.eta.row(i).transpose() - p_.m;
      Vector pr = precision_ * r;
      for (int j = 0; j < k_; ++j, ++block) {
        const double delta = state.step(block);
        const double old = p_.eta(i, j);
        const auto& touched = model_.series_touching(static_cast<std::size_t>(i), j);
        p_.eta(i, j) = old + delta;
        const double dll = touched_loglik(touched, fresh_);
        const double dre = -0.5 * (2.0 * delta * pr(j) + delta * delta * precision_(j, j));
        if (state.accept(block, dll + dre)) {
          commit(touched, fresh_);
          r(j) += delta;
          pr += delta * precision_.col(j);
        } else {
          p_.eta(i, j) = old;
        }
      }
    }
  }

  void update_q(mcmc::ChainState& state) {
    const std::size_t base = data_.study_count() * static_cast<std::size_t>(k_);
    for (std::size_t slot = 0; slot < p_.q.size(); ++slot) {
      const std::size_t block = base + slot;
      const double old = p_.q[slot];
      const double u = logit(old) + state.step(block);
      const double proposed = inverse_logit(u);
      if (!(proposed > 0.0 && proposed < 1.0)) {
        state.accept(block, kNegInf);
        continue;
      }
      const auto& touched = model_.series_with_q(slot);
      p_.q[slot] = proposed;
      const double dll = touched_loglik(touched, fresh_);
      // Uniform prior on q, proposal on logit(q): Jacobian q(1 - q).
      const double jac = std::log(proposed) + std::log1p(-proposed) - std::log(old) - std::log1p(-old);
      if (state.accept(block, dll + jac)) {
        commit(touched, fresh_);
      } else {
        p_.q[slot] = old;
      }
    }
  }

  double m_log_prior(const Vector& m) const {
    const auto& pri = model_.priors();
    double lp = 0.0;
    for (int j = 0; j < k_; ++j) {
      lp += logistic_logpdf(m(j), pri.m_location, pri.m_scale);
    }
    return lp;
  }

  void update_m(mcmc::ChainState& state) {
    const auto n = static_cast<double>(p_.eta.rows());
    const std::size_t base =
        data_.study_count() * static_cast<std::size_t>(k_) + p_.q.size();
    const auto& pri = model_.priors();
    if (n > 0) {
      // Independence proposal from N(eta-bar, Sigma / n); the ratio leaves
      // only the prior.
      const Vector ebar = p_.eta.colwise().mean().transpose();
      const Eigen::LLT<Matrix> llt(p_.sigma / n);
      const Vector proposed = sample_mvn(ebar, llt, state.rng());
      if (state.accept(base + static_cast<std::size_t>(k_),
                       m_log_prior(proposed) - m_log_prior(p_.m))) {
        p_.m = proposed;
      }
    }
    Vector d = p_.m;
    if (p_.eta.rows() > 0) {
      d -= p_.eta.colwise().mean().transpose();
    } else {
      d.setZero();
    }
    Vector pd = precision_ * d;
    for (int j = 0; j < k_; ++j) {
      const std::size_t block = base + static_cast<std::size_t>(j);
      const double delta = state.step(block);
      const double old = p_.m(j);
      const double dre = -0.5 * n * (2.0 * delta * pd(j) + delta * delta * precision_(j, j));
      const double dprior = logistic_logpdf(old + delta, pri.m_location, pri.m_scale) -
                            logistic_logpdf(old, pri.m_location, pri.m_scale);
      if (state.accept(block, dre + dprior)) {
        p_.m(j) = old + delta;
        d(j) += delta;
        pd += delta * precision_.col(j);
      }
    }
  }

  void update_sigma(mcmc::ChainState& state) {
    Matrix scale = Matrix::Identity(k_, k_);
    for (Eigen::Index i = 0; i < p_.eta.rows(); ++i) {
      const Vector r = p_.eta.row(i).transpose() - p_.m;
      scale.noalias() += r * r.transpose();
    }
    const double df = model_.wishart_df() + static_cast<double>(p_.eta.rows());
    for (int attempt = 0; attempt < 10; ++attempt) {
      Matrix draw = sample_inverse_wishart(scale, df, state.rng());
      if (cholesky(draw)) {
        p_.sigma = std::move(draw);
        refresh_sigma();
        return;
      }
    }
  }

  void refresh_sigma() {
    const auto llt = cholesky(p_.sigma);
    if (!llt) {
      throw mcmc::SamplerFault("binary chain: Sigma is not positive definite");
    }
    precision_ = llt->solve(Matrix::Identity(k_, k_));
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
  }

  const BinaryModel& model_;
  const CompiledData& data_;
  BinaryParams p_;
  int k_;
  Matrix precision_;
  std::vector<double> cache_;
  std::vector<double> fresh_;
};

}  // namespace

std::unique_ptr<mcmc::ChainKernel> BinaryModel::start_chain(Rng& rng) const {
  const int k = states();
  const auto n = static_cast<Eigen::Index>(data_.study_count());
  BinaryParams p;
  p.m.resize(k);
  for (int j = 0; j < k; ++j) {
    p.m(j) = priors_.m_location + priors_.m_scale * rng.logistic();
  }
  p.sigma = identity(k);
  p.eta.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      p.eta(i, j) = p.m(j) + 0.1 * rng.normal();
    }
  }
  p.q.resize(data_.q_count());
  for (auto& q : p.q) {
    q = inverse_logit(0.1 * rng.normal());
  }
  return std::make_unique<BinaryKernel>(*this, std::move(p));
}

double log_posterior_binary(const BinaryParams& p, const Dataset& d, const BinaryPriors& priors) {
  const BinaryModel model(d, priors);
  return model.terms(p).total();
}

BinaryAccuracy summary_accuracy_binary(std::span<const double> m) {
  BinaryAccuracy out;
  if (m.empty()) {
    return out;
  }
  out.specificity = 1.0 - inverse_logit(m[0]);
  for (std::size_t j = 1; j < m.size(); ++j) {
    out.sensitivity.push_back(inverse_logit(m[j]));
  }
  return out;
}

}  // namespace stagesens
