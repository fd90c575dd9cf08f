#pragma once

// Columnar CSV storage of posterior draws: one row per stored draw, columns
// chain, iteration, then every parameter in model layout order.

#include <iosfwd>
#include <string>
#include <string_view>

#include "stagesens/sampler.hpp"

namespace stagesens::cli {

/// Quotes a CSV field when it contains a comma or quote.
std::string csv_field(std::string_view s);

/// `burn_in` and `thin` reconstruct the iteration number of each draw.
void write_draws(std::ostream& out, const mcmc::PosteriorDraws& draws, int burn_in, int thin);

/// Reads draws written by write_draws. Chains must have equal draw counts.
/// Throws std::runtime_error on malformed input.
mcmc::PosteriorDraws read_draws(std::istream& in);

}  // namespace stagesens::cli
