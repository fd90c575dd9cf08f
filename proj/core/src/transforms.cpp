#include "stagesens/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stagesens {

double clamp_probability(double p) noexcept {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

double logit(double p) noexcept {
  p = clamp_probability(p);
  return std::log(p) - std::log1p(-p);
}

double inverse_logit(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_inverse_logit(double x) noexcept {
  if (x >= 0.0) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

double inverse_logit_difference(double a, double b) noexcept {
  if (a <= b) {
    return 0.0;
  }
  // s(a) - s(b) = s(a) s(-b) (1 - exp(b - a))
  return inverse_logit(a) * inverse_logit(-b) * -std::expm1(b - a);
}

double boxcox(double threshold, double lambda) {
  if (!(threshold > 0.0)) {
    throw std::domain_error("boxcox: threshold must be positive, got " +
                            std::to_string(threshold));
  }
  if (std::abs(lambda) <= kBoxCoxLogBranch) {
    return std::log(threshold);
  }
  return std::expm1(lambda * std::log(threshold)) / lambda;
}

double positivity_prob(double location, double scale, double threshold, double lambda) {
  return inverse_logit((location - boxcox(threshold, lambda)) / scale);
}

}  // namespace stagesens
