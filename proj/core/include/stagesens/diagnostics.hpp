#pragma once

// Convergence diagnostics: split, rank-normalized R-hat and bulk effective
// sample size.

#include <span>
#include <vector>

#include "stagesens/sampler.hpp"

namespace stagesens {

inline constexpr int kMinDiagnosticChains = 2;
inline constexpr int kMinDiagnosticDraws = 100;
/// R-hat above this value marks a parameter as not converged.
inline constexpr double kRhatThreshold = 1.05;

struct ParameterDiagnostics {
  /// max(bulk, folded) split R-hat; NaN when every draw is identical.
  double rhat = 0.0;
  /// Bulk effective sample size; NaN when every draw is identical.
  double ess = 0.0;
  bool constant = false;
};

/// Diagnostics of one scalar quantity given its draws per chain. Throws
/// std::invalid_argument with fewer than 2 chains, fewer than 100 draws per
/// chain or chains of unequal length.
ParameterDiagnostics diagnose(const std::vector<std::vector<double>>& chains);

/// Diagnostics of every column of a draw matrix.
std::vector<ParameterDiagnostics> diagnostics(const mcmc::PosteriorDraws& draws);

/// Split R-hat of already split/normalized chains (classic formula).
double potential_scale_reduction(const std::vector<std::vector<double>>& chains);

/// Geyer initial-positive-sequence effective sample size.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

}  // namespace stagesens
