#include "stagesens/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stagesens/transforms.hpp"

namespace stagesens {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) {
    return "NA";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (const char c : s) {
    out += c;
    if (c == '"') {
      out += '"';
    }
  }
  return out + '"';
}

std::vector<std::vector<double>> split_by_chain(const std::vector<double>& flat, int chains) {
  const std::size_t per = flat.size() / static_cast<std::size_t>(chains);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(chains));
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].assign(flat.begin() + static_cast<std::ptrdiff_t>(c * per),
                  flat.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
  }
  return out;
}

std::vector<double> row_of(const mcmc::PosteriorDraws& draws, Eigen::Index r) {
  std::vector<double> out(static_cast<std::size_t>(draws.values.cols()));
  for (Eigen::Index c = 0; c < draws.values.cols(); ++c) {
    out[static_cast<std::size_t>(c)] = draws.values(r, c);
  }
  return out;
}

}  // namespace

double HierarchicalModel::deviance(std::span<const double> params) const {
  const auto parts = series_deviance(params);
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) {
    throw std::invalid_argument("quantile of an empty sample");
  }
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ParameterRow summarize_quantity(std::string name, const std::vector<std::vector<double>>& chains) {
  ParameterRow row;
  row.name = std::move(name);
  std::vector<double> all;
  for (const auto& c : chains) {
    all.insert(all.end(), c.begin(), c.end());
  }
  if (all.empty()) {
    throw std::invalid_argument("summary of an empty draw set");
  }
  const double n = static_cast<double>(all.size());
  row.mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : all) {
    ss += (v - row.mean) * (v - row.mean);
  }
  row.sd = all.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(all.begin(), all.end());
  row.median = quantile_sorted(all, 0.5);
  row.lo95 = quantile_sorted(all, 0.025);
  row.hi95 = quantile_sorted(all, 0.975);
  try {
    const auto d = diagnose(chains);
    row.rhat = d.rhat;
    row.ess = d.ess;
  } catch (const std::invalid_argument&) {
    row.rhat = kNaN;
    row.ess = kNaN;
  }
  return row;
}

std::vector<std::vector<std::vector<double>>> curve_draws(const mcmc::PosteriorDraws& draws,
                                                          const HierarchicalModel& model,
                                                          std::span<const double> grid) {
  const auto k = static_cast<std::size_t>(model.states());
  const std::size_t nd = draws.draw_count();
  std::vector<std::vector<std::vector<double>>> out(k);
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(nd); ++r) {
    const auto row = row_of(draws, r);
    const auto probs = model.positive_probabilities(row, grid);
    for (std::size_t j = 0; j < k; ++j) {
      if (out[j].empty()) {
        out[j].assign(probs[j].size(), std::vector<double>(nd));
      }
      for (std::size_t g = 0; g < probs[j].size(); ++g) {
        out[j][g][static_cast<std::size_t>(r)] = probs[j][g];
      }
    }
  }
  return out;
}

FitSummary summarize(const mcmc::PosteriorDraws& draws, const HierarchicalModel& model,
                     std::span<const double> grid) {
  if (draws.draw_count() == 0) {
    throw std::invalid_argument("cannot summarize an empty draw set");
  }
  const bool binary = model.data().kind == TestKind::binary;
  if (!binary && grid.empty()) {
    throw std::invalid_argument("a threshold grid is required for multi-threshold models");
  }
  FitSummary s;
  s.label = model.label();
  if (draws.chains < kMinDiagnosticChains || draws.draws_per_chain < kMinDiagnosticDraws) {
    s.warnings.push_back("convergence diagnostics unavailable: need >= 2 chains and >= 100 "
                         "stored draws per chain");
  }
  for (std::size_t p = 0; p < draws.names.size(); ++p) {
    std::vector<std::vector<double>> chains;
    for (int c = 0; c < draws.chains; ++c) {
      chains.push_back(draws.chain_column(c, p));
    }
    s.parameters.push_back(summarize_quantity(draws.names[p], chains));
    if (s.parameters.back().rhat > kRhatThreshold) {
      s.not_converged.push_back(draws.names[p]);
    }
  }

  const std::vector<double> binary_grid;
  const auto curves = curve_draws(draws, model, binary ? std::span<const double>(binary_grid) : grid);
  for (std::size_t j = 0; j < curves.size(); ++j) {
    for (std::size_t g = 0; g < curves[j].size(); ++g) {
      const auto row = summarize_quantity("", split_by_chain(curves[j][g], draws.chains));
      CurveRow c;
      c.state = static_cast<int>(j);
      c.threshold = binary ? kNaN : grid[g];
      c.median = row.median;
      c.lo95 = row.lo95;
      c.hi95 = row.hi95;
      c.rhat = row.rhat;
      s.curves.push_back(c);
    }
  }
  if (binary) {
    for (std::size_t j = 0; j < curves.size(); ++j) {
      auto values = curves[j][0];
      std::string name = "sensitivity[" + std::to_string(j) + "]";
      if (j == 0) {
        for (auto& v : values) {
          v = 1.0 - v;
        }
        name = "specificity";
      }
      s.accuracy.push_back(summarize_quantity(name, split_by_chain(values, draws.chains)));
    }
  } else {
    const auto& d = model.data();
    const double lo = *std::min_element(grid.begin(), grid.end());
    const double hi = *std::max_element(grid.begin(), grid.end());
    if (lo < d.min_threshold || hi > d.max_threshold) {
      s.warnings.push_back("curve grid [" + num(lo) + ", " + num(hi) +
                           "] extends outside the observed threshold range [" +
                           num(d.min_threshold) + ", " + num(d.max_threshold) + "]");
    }
  }

  s.deviance = dic(draws, model);
  if (s.deviance.pd < 0.0) {
    s.warnings.push_back("negative pD (" + num(s.deviance.pd) +
                         "): the posterior-mean plug-in fits worse than the average draw");
  }
  return s;
}

DevianceSummary dic_from(double resdev, double pd, std::string label) {
  DevianceSummary d;
  d.label = std::move(label);
  d.resdev = resdev;
  d.pd = pd;
  d.dic = resdev + pd;
  return d;
}

DevianceSummary dic(const mcmc::PosteriorDraws& draws, const HierarchicalModel& model) {
  const auto nd = static_cast<Eigen::Index>(draws.draw_count());
  if (nd == 0) {
    throw std::invalid_argument("cannot compute DIC from an empty draw set");
  }
  double mean_dev = 0.0;
  for (Eigen::Index r = 0; r < nd; ++r) {
    mean_dev += model.deviance(row_of(draws, r));
  }
  mean_dev /= static_cast<double>(nd);

  const Eigen::VectorXd centre = draws.values.colwise().mean().transpose();
  const std::vector<double> plug(centre.data(), centre.data() + centre.size());
  const auto parts = model.series_deviance(plug);
  const auto& data = model.data();
  for (std::size_t s = 0; s < parts.size(); ++s) {
    if (!std::isfinite(parts[s])) {
      const auto& cs = data.series[s];
      throw std::runtime_error("deviance at the posterior mean is not finite for study " +
                               data.studies[cs.study] + ", state " + cs.state.token());
    }
  }
  const double plug_dev = std::accumulate(parts.begin(), parts.end(), 0.0);
  return dic_from(mean_dev, mean_dev - plug_dev, model.label());
}

std::vector<double> linear_grid(double lo, double hi, int points) {
  if (points < 1) {
    throw std::invalid_argument("grid needs at least one point");
  }
  if (!(hi >= lo)) {
    throw std::invalid_argument("grid maximum is below its minimum");
  }
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    out[static_cast<std::size_t>(i)] =
        points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return out;
}

void write_summary_csv(std::ostream& out, const FitSummary& s) {
  out << "name,mean,median,sd,lo95,hi95,rhat,ess\n";
  auto row = [&](const ParameterRow& r) {
    out << quoted(r.name) << ',' << num(r.mean) << ',' << num(r.median) << ',' << num(r.sd) << ','
        << num(r.lo95) << ',' << num(r.hi95) << ',' << num(r.rhat) << ',' << num(r.ess) << '\n';
  };
  for (const auto& r : s.parameters) {
    row(r);
  }
  for (const auto& r : s.accuracy) {
    row(r);
  }
}

void write_curves_csv(std::ostream& out, const FitSummary& s) {
  out << "state,threshold,median,lo95,hi95\n";
  for (const auto& c : s.curves) {
    out << c.state << ',' << (std::isnan(c.threshold) ? std::string() : num(c.threshold)) << ','
        << num(c.median) << ',' << num(c.lo95) << ',' << num(c.hi95) << '\n';
  }
}

void write_deviance_json(std::ostream& out, const DevianceSummary& d) {
  const nlohmann::ordered_json j = {
      {"label", d.label}, {"resdev", d.resdev}, {"pD", d.pd}, {"DIC", d.dic}};
  out << j.dump(2) << '\n';
}

DevianceSummary read_deviance_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("deviance file is not valid JSON: ") + e.what());
  }
  DevianceSummary d;
  for (const char* key : {"resdev", "pD", "DIC"}) {
    if (!j.contains(key) || !j[key].is_number()) {
      throw std::runtime_error(std::string("deviance file lacks numeric field '") + key + "'");
    }
  }
  d.label = j.value("label", std::string());
  d.resdev = j["resdev"].get<double>();
  d.pd = j["pD"].get<double>();
  d.dic = j["DIC"].get<double>();
  return d;
}

void write_report(std::ostream& out, const FitSummary& s) {
  if (!s.converged()) {
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : s.parameters) {
      if (r.rhat > worst) {
        worst = r.rhat;
        worst_name = r.name;
      }
    }
    out << "########################################################\n"
        << "# WARNING: chains have not converged\n"
        << "# " << s.not_converged.size() << " parameter(s) with R-hat > " << num(kRhatThreshold)
        << "; worst " << worst_name << " (R-hat " << num(worst) << ")\n"
        << "# Estimates below may be unreliable.\n"
        << "########################################################\n\n";
  }
  for (const auto& w : s.warnings) {
    out << "warning: " << w << '\n';
  }
  if (!s.warnings.empty()) {
    out << '\n';
  }
  out << "model: " << s.label << '\n'
      << "resdev " << num(s.deviance.resdev) << "  pD " << num(s.deviance.pd) << "  DIC "
      << num(s.deviance.dic) << "\n\n";
  if (!s.accuracy.empty()) {
    out << "accuracy (median [95% CrI]):\n";
    for (const auto& r : s.accuracy) {
      out << "  " << r.name << "  " << num(r.median) << " [" << num(r.lo95) << ", " << num(r.hi95)
          << "]\n";
    }
  }
}

}  // namespace stagesens
