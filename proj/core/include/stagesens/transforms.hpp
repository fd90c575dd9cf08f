#pragma once

// Scalar links shared by the binary and multiple-threshold models.

namespace stagesens {

/// Probabilities are clamped to [kProbabilityFloor, 1 - kProbabilityFloor]
/// before entering a log or logit.
inline constexpr double kProbabilityFloor = 1e-12;

/// Box-Cox switches to the log branch for |lambda| <= kBoxCoxLogBranch.
inline constexpr double kBoxCoxLogBranch = 1e-8;

inline constexpr double kLambdaMin = -3.0;
inline constexpr double kLambdaMax = 3.0;

double clamp_probability(double p) noexcept;

/// log(p / (1 - p)) after clamping p.
double logit(double p) noexcept;

double inverse_logit(double x) noexcept;

/// log(inverse_logit(x)), stable for large |x|.
double log_inverse_logit(double x) noexcept;

/// inverse_logit(a) - inverse_logit(b) for a >= b, without cancellation when
/// both values are close to 0 or 1.
double inverse_logit_difference(double a, double b) noexcept;

/// Box-Cox transform of a positive threshold: (C^lambda - 1) / lambda, or
/// log C on the log branch. Throws std::domain_error for C <= 0.
double boxcox(double threshold, double lambda);

/// Test-positive probability of a logistic test-result distribution with the
/// given location and scale: inverse_logit((location - boxcox(C)) / scale).
double positivity_prob(double location, double scale, double threshold, double lambda);

}  // namespace stagesens
