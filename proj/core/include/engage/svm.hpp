#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/platt.hpp"
#include "engage/types.hpp"

namespace engage {

enum class Kernel { linear, rbf };

struct SvmParams {
  Kernel kernel = Kernel::rbf;
  double C = 1.0;
  /// RBF width; <= 0 selects 1 / (d * mean feature variance) at fit time.
  double gamma = 0.0;
  /// Maximal KKT violation accepted at convergence.
  double tolerance = 1e-3;
  std::size_t max_iterations = 10'000'000;
  std::size_t platt_folds = 5;
};

double kernel_value(Kernel kernel, double gamma, std::span<const double> a, std::span<const double> b);

/// Solution of the soft-margin dual
///   max  sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
///   s.t. 0 <= alpha_i <= C,  sum_i y_i alpha_i = 0
/// Decision function f(x) = sum_i alpha_i y_i K(x_i, x) + bias.
struct BinarySvmSolution {
  std::vector<double> alpha;
  double bias = 0.0;
  double dual_objective = 0.0;
  std::size_t iterations = 0;
};

/// Sequential minimal optimization with second-order working-set selection.
/// `y` holds +1 / -1; `gamma` must already be resolved for RBF.
BinarySvmSolution solve_binary_svm(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma, double C,
                                   double tolerance = 1e-3, std::size_t max_iterations = 10'000'000);

/// Largest complementary-slackness violation of `solution`:
///   alpha=0 -> max(0, 1 - y f), alpha=C -> max(0, y f - 1), free -> |y f - 1|.
double kkt_residual(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma, double C,
                    const BinarySvmSolution& solution);

double dual_objective(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma,
                      std::span<const double> alpha);

/// Compact decision function kept after training.
struct BinarySvm {
  Kernel kernel = Kernel::rbf;
  double gamma = 0.0;
  Matrix support_vectors;
  std::vector<double> coefficients;  // alpha_i * y_i
  double bias = 0.0;

  double decision(std::span<const double> x) const;
};

BinarySvm to_decision_function(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma,
                               const BinarySvmSolution& solution);

/// Decision values for every sample from models trained on the other folds.
std::vector<double> cross_validated_decision_values(const Matrix& x, std::span<const int> y, Kernel kernel,
                                                    double gamma, double C, double tolerance, std::size_t folds,
                                                    std::uint64_t seed);

double default_gamma(const Matrix& x);

/// One-vs-rest multiclass SVM with per-level Platt calibration.
struct SvmModel {
  SvmParams params;
  double gamma = 0.0;
  std::array<BinarySvm, kLevelCount> machines;
  std::array<PlattParameters, kLevelCount> calibration;
  std::array<bool, kLevelCount> calibrated{false, false, false};
  std::size_t dimension = 0;
};

SvmModel fit_svm(const Matrix& x, std::span<const EngagementLevel> y, const SvmParams& params, std::uint64_t seed);

/// Per-level Platt probabilities before normalization.
std::array<double, kLevelCount> svm_raw_probabilities(const SvmModel& model, std::span<const double> x);
LabelDistribution svm_predict(const SvmModel& model, std::span<const double> x);

nlohmann::json svm_to_json(const SvmModel& model);
SvmModel svm_from_json(const nlohmann::json& doc);

}  // namespace engage
