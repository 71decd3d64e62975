#pragma once

#include <span>

namespace engage {

/// Sigmoid P(y=1 | f) = 1 / (1 + exp(a*f + b)); a < 0 for a useful classifier.
struct PlattParameters {
  double a = -1.0;
  double b = 0.0;

  double probability(double decision_value) const;
};

/// Fits (a, b) by Newton's method with backtracking on the cross-entropy
/// against the regularized targets (N+ + 1)/(N+ + 2) and 1/(N- + 2).
/// `labels` are 0/1; both must be present.
PlattParameters platt_calibrate(std::span<const double> decision_values, std::span<const int> labels);

/// Regularized cross-entropy that platt_calibrate minimizes.
double platt_objective(const PlattParameters& params, std::span<const double> decision_values,
                       std::span<const int> labels);

}  // namespace engage
