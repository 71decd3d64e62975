#include "engage/platt.hpp"

#include <algorithm>
#include <cmath>

#include "engage/types.hpp"

namespace engage {

double PlattParameters::probability(double f) const {
  const double z = a * f + b;
  // Computed on the stable branch; clamped into the open interval.
  const double p = z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
  constexpr double kFloor = 1e-12;
  return std::clamp(p, kFloor, 1.0 - kFloor);
}

namespace {

struct Targets {
  double high;
  double low;
};

Targets targets_for(std::span<const int> labels) {
  double positives = 0.0, negatives = 0.0;
  for (int y : labels) (y == 1 ? positives : negatives) += 1.0;
  if (positives == 0.0 || negatives == 0.0) {
    throw Error(ErrorKind::validation, "Platt scaling needs both positive and negative examples");
  }
  return {(positives + 1.0) / (positives + 2.0), 1.0 / (negatives + 2.0)};
}

double objective(double a, double b, std::span<const double> f, std::span<const int> labels, const Targets& t) {
  double value = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double target = labels[i] == 1 ? t.high : t.low;
    const double z = f[i] * a + b;
    value += z >= 0.0 ? target * z + std::log1p(std::exp(-z)) : (target - 1.0) * z + std::log1p(std::exp(z));
  }
  return value;
}

}  // namespace

double platt_objective(const PlattParameters& params, std::span<const double> decision_values,
                       std::span<const int> labels) {
  return objective(params.a, params.b, decision_values, labels, targets_for(labels));
}

PlattParameters platt_calibrate(std::span<const double> f, std::span<const int> labels) {
  if (f.size() != labels.size()) throw Error(ErrorKind::dimension, "decision values and labels differ in length");
  const Targets t = targets_for(labels);
  double positives = 0.0, negatives = 0.0;
  for (int y : labels) (y == 1 ? positives : negatives) += 1.0;

  constexpr int kMaxIterations = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  constexpr double kEps = 1e-5;

  double a = 0.0;
  double b = std::log((negatives + 1.0) / (positives + 1.0));
  double fval = objective(a, b, f, labels, t);

  for (int iter = 0; iter < kMaxIterations; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * a + b;
      double p, q;
      if (z >= 0.0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double d1 = (labels[i] == 1 ? t.high : t.low) - p;
      g1 += f[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;

    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;

    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb, f, labels, t);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {a, b};
}

}  // namespace engage
