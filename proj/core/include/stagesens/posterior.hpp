#pragma once

// Posterior summaries, accuracy curves and deviance-based model comparison.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stagesens/diagnostics.hpp"
#include "stagesens/model.hpp"

namespace stagesens {

struct ParameterRow {
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  double rhat = 0.0;
  double ess = 0.0;
};

/// Test-positive probability of one state at one threshold (NaN for binary
/// tests). State 0 rows are false-positive fractions.
struct CurveRow {
  int state = 0;
  double threshold = 0.0;
  double median = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  double rhat = 0.0;
};

struct DevianceSummary {
  std::string label;
  double resdev = 0.0;
  double pd = 0.0;
  double dic = 0.0;
};

struct FitSummary {
  std::string label;
  std::vector<ParameterRow> parameters;
  /// Specificity and per-stage sensitivity (binary tests only).
  std::vector<ParameterRow> accuracy;
  std::vector<CurveRow> curves;
  DevianceSummary deviance;
  /// Parameters whose R-hat exceeds the threshold.
  std::vector<std::string> not_converged;
  std::vector<std::string> warnings;

  bool converged() const noexcept { return not_converged.empty(); }
};

/// Linear-interpolation quantile of sorted values (type 7).
double quantile_sorted(std::span<const double> sorted, double p);

/// Row of summary statistics for one quantity; chains are the per-chain draws.
/// R-hat and ESS are NaN when diagnostics are unavailable.
ParameterRow summarize_quantity(std::string name, const std::vector<std::vector<double>>& chains);

/// Test-positive probability draws: result[state][grid point][draw].
std::vector<std::vector<std::vector<double>>> curve_draws(const mcmc::PosteriorDraws& draws,
                                                          const HierarchicalModel& model,
                                                          std::span<const double> grid);

/// Full summary. `grid` is required (non-empty) for multi-threshold models
/// and ignored for binary ones.
FitSummary summarize(const mcmc::PosteriorDraws& draws, const HierarchicalModel& model,
                     std::span<const double> grid);

/// resdev = mean deviance over draws; pD = resdev - D(posterior mean);
/// DIC = resdev + pD. Throws std::runtime_error naming the offending series
/// when the plug-in deviance is not finite.
DevianceSummary dic(const mcmc::PosteriorDraws& draws, const HierarchicalModel& model);

DevianceSummary dic_from(double resdev, double pd, std::string label = {});

/// Evenly spaced grid of `points` thresholds on [lo, hi].
std::vector<double> linear_grid(double lo, double hi, int points);

void write_summary_csv(std::ostream& out, const FitSummary& s);
void write_curves_csv(std::ostream& out, const FitSummary& s);
void write_deviance_json(std::ostream& out, const DevianceSummary& d);
DevianceSummary read_deviance_json(std::istream& in);
/// Human-readable report, led by a warning block when the fit did not
/// converge or pD is negative.
void write_report(std::ostream& out, const FitSummary& s);

}  // namespace stagesens
