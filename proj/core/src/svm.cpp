#include "engage/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace engage {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kCacheBudgetBytes = std::size_t{256} << 20;

/// Lazily computed kernel rows. The cache is flushed wholesale when full.
class KernelRows {
 public:
  KernelRows(const Matrix& x, Kernel kernel, double gamma)
      : x_(x), kernel_(kernel), gamma_(gamma), rows_(static_cast<std::size_t>(x.rows())) {
    squared_norms_ = x.rowwise().squaredNorm();
    diagonal_.resize(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      diagonal_[static_cast<std::size_t>(i)] = kernel == Kernel::linear ? squared_norms_(i) : 1.0;
    }
    max_cached_ = std::max<std::size_t>(2, kCacheBudgetBytes / (sizeof(double) * std::max<Eigen::Index>(1, x.rows())));
  }

  const std::vector<double>& row(std::size_t i) {
    auto& r = rows_[i];
    if (!r.empty()) return r;
    if (cached_ >= max_cached_) {
      for (auto& other : rows_) std::vector<double>().swap(other);
      cached_ = 0;
    }
    const auto n = x_.rows();
    r.resize(static_cast<std::size_t>(n));
    const Eigen::VectorXd dots = x_ * x_.row(static_cast<Eigen::Index>(i)).transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (kernel_ == Kernel::linear) {
        r[static_cast<std::size_t>(j)] = dots(j);
      } else {
        const double sq = std::max(0.0, squared_norms_(static_cast<Eigen::Index>(i)) + squared_norms_(j) - 2.0 * dots(j));
        r[static_cast<std::size_t>(j)] = std::exp(-gamma_ * sq);
      }
    }
    ++cached_;
    return r;
  }

  double diagonal(std::size_t i) const { return diagonal_[i]; }

 private:
  const Matrix& x_;
  Kernel kernel_;
  double gamma_;
  Eigen::VectorXd squared_norms_;
  std::vector<double> diagonal_;
  std::vector<std::vector<double>> rows_;
  std::size_t cached_ = 0;
  std::size_t max_cached_ = 0;
};

}  // namespace

double kernel_value(Kernel kernel, double gamma, std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  if (kernel == Kernel::linear) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  }
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * acc);
}

BinarySvmSolution solve_binary_svm(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma, double C,
                                   double tolerance, std::size_t max_iterations) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (n != y.size()) throw Error(ErrorKind::dimension, "SVM samples and labels differ in length");
  if (n < 2) throw Error(ErrorKind::validation, "SVM needs at least two samples");
  if (!(C > 0.0)) throw Error(ErrorKind::validation, "SVM C must be positive");
  for (int label : y) {
    if (label != 1 && label != -1) throw Error(ErrorKind::validation, "SVM labels must be +1 or -1");
  }

  KernelRows kernel_rows(x, kernel, gamma);
  std::vector<double> alpha(n, 0.0);
  std::vector<double> gradient(n, -1.0);  // G = Q alpha - 1

  const auto is_upper = [&](std::size_t t) { return alpha[t] >= C; };
  const auto is_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  std::vector<double> row_i;
  std::size_t iteration = 0;
  for (; iteration < max_iterations; ++iteration) {
    // Working set selection (second order).
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i_sel = -1, j_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!is_upper(t) && -gradient[t] >= gmax) {
          gmax = -gradient[t];
          i_sel = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!is_lower(t) && gradient[t] >= gmax) {
        gmax = gradient[t];
        i_sel = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i_sel < 0) break;
    const auto i = static_cast<std::size_t>(i_sel);
    const auto& k_i = kernel_rows.row(i);
    double best_drop = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double q_it = static_cast<double>(y[i] * y[t]) * k_i[t];
      if (y[t] == 1) {
        if (is_lower(t)) continue;
        const double grad_diff = gmax + gradient[t];
        gmax2 = std::max(gmax2, gradient[t]);
        if (grad_diff > 0.0) {
          double quad = kernel_rows.diagonal(i) + kernel_rows.diagonal(t) - 2.0 * y[i] * q_it;
          if (quad <= 0.0) quad = kTau;
          const double drop = -(grad_diff * grad_diff) / quad;
          if (drop <= best_drop) {
            best_drop = drop;
            j_sel = static_cast<std::ptrdiff_t>(t);
          }
        }
      } else {
        if (is_upper(t)) continue;
        const double grad_diff = gmax - gradient[t];
        gmax2 = std::max(gmax2, -gradient[t]);
        if (grad_diff > 0.0) {
          double quad = kernel_rows.diagonal(i) + kernel_rows.diagonal(t) + 2.0 * y[i] * q_it;
          if (quad <= 0.0) quad = kTau;
          const double drop = -(grad_diff * grad_diff) / quad;
          if (drop <= best_drop) {
            best_drop = drop;
            j_sel = static_cast<std::ptrdiff_t>(t);
          }
        }
      }
    }
    if (gmax + gmax2 < tolerance || j_sel < 0) break;
    const auto j = static_cast<std::size_t>(j_sel);
    // Copies: fetching row j may flush the cache that holds row i.
    row_i.assign(k_i.begin(), k_i.end());
    const auto& k_j = kernel_rows.row(j);
    const auto& k_i_row = row_i;

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    const double q_ij = static_cast<double>(y[i] * y[j]) * k_i_row[j];
    if (y[i] != y[j]) {
      double quad = kernel_rows.diagonal(i) + kernel_rows.diagonal(j) + 2.0 * q_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-gradient[i] - gradient[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = kernel_rows.diagonal(i) + kernel_rows.diagonal(j) - 2.0 * q_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (gradient[i] - gradient[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) {
      gradient[t] += static_cast<double>(y[t]) * (y[i] * k_i_row[t] * dai + y[j] * k_j[t] * daj);
    }
  }

  // Bias: average y*G over free variables, midpoint of the feasible range otherwise.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * gradient[t];
    if (is_upper(t)) {
      if (y[t] == -1) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (is_lower(t)) {
      if (y[t] == 1) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  double rho = 0.0;
  if (free_count > 0) {
    rho = free_sum / static_cast<double>(free_count);
  } else if (std::isfinite(upper) && std::isfinite(lower)) {
    rho = (upper + lower) / 2.0;
  } else if (std::isfinite(upper)) {
    rho = upper;
  } else if (std::isfinite(lower)) {
    rho = lower;
  }

  BinarySvmSolution solution;
  solution.bias = -rho;
  solution.iterations = iteration;
  double objective = 0.0;
  for (std::size_t t = 0; t < n; ++t) objective += alpha[t] * (gradient[t] - 1.0);
  solution.dual_objective = -objective / 2.0;
  solution.alpha = std::move(alpha);
  return solution;
}

double dual_objective(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma,
                      std::span<const double> alpha) {
  const std::size_t n = alpha.size();
  double linear = 0.0, quadratic = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linear += alpha[i];
    for (std::size_t j = 0; j < n; ++j) {
      quadratic += alpha[i] * alpha[j] * y[i] * y[j] *
                   kernel_value(kernel, gamma, row_span(x, static_cast<Eigen::Index>(i)),
                                row_span(x, static_cast<Eigen::Index>(j)));
    }
  }
  return linear - 0.5 * quadratic;
}

double kkt_residual(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma, double C,
                    const BinarySvmSolution& solution) {
  const std::size_t n = solution.alpha.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = solution.bias;
    for (std::size_t j = 0; j < n; ++j) {
      f += solution.alpha[j] * y[j] *
           kernel_value(kernel, gamma, row_span(x, static_cast<Eigen::Index>(j)), row_span(x, static_cast<Eigen::Index>(i)));
    }
    const double margin = y[i] * f;
    double r;
    if (solution.alpha[i] <= 0.0) r = std::max(0.0, 1.0 - margin);
    else if (solution.alpha[i] >= C) r = std::max(0.0, margin - 1.0);
    else r = std::abs(margin - 1.0);
    worst = std::max(worst, r);
  }
  return worst;
}

double BinarySvm::decision(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != support_vectors.cols() && support_vectors.rows() > 0) {
    throw Error(ErrorKind::dimension, "SVM input dimension mismatch");
  }
  double f = bias;
  for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) {
    f += coefficients[static_cast<std::size_t>(i)] * kernel_value(kernel, gamma, row_span(support_vectors, i), x);
  }
  return f;
}

BinarySvm to_decision_function(const Matrix& x, std::span<const int> y, Kernel kernel, double gamma,
                               const BinarySvmSolution& solution) {
  BinarySvm machine;
  machine.kernel = kernel;
  machine.gamma = gamma;
  machine.bias = solution.bias;
  std::vector<Eigen::Index> support;
  for (std::size_t i = 0; i < solution.alpha.size(); ++i) {
    if (solution.alpha[i] > 0.0) support.push_back(static_cast<Eigen::Index>(i));
  }
  machine.support_vectors.resize(static_cast<Eigen::Index>(support.size()), x.cols());
  for (std::size_t s = 0; s < support.size(); ++s) {
    machine.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(support[s]);
    const auto i = static_cast<std::size_t>(support[s]);
    machine.coefficients.push_back(solution.alpha[i] * y[i]);
  }
  if (kernel == Kernel::linear && !support.empty()) {
    // Collapse to a single weight vector stored as one "support vector" with unit coefficient.
    Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(x.cols());
    for (std::size_t s = 0; s < support.size(); ++s) w += machine.coefficients[s] * machine.support_vectors.row(static_cast<Eigen::Index>(s));
    machine.support_vectors = w;
    machine.coefficients = {1.0};
  }
  if (support.empty()) machine.support_vectors.resize(0, x.cols());
  return machine;
}

double default_gamma(const Matrix& x) {
  const double d = static_cast<double>(x.cols());
  if (x.rows() == 0) return 1.0;
  const Eigen::RowVectorXd means = x.colwise().mean();
  const double variance = (x.rowwise() - means).array().square().colwise().mean().mean();
  if (!(variance > 0.0) || d == 0.0) return 1.0;
  return 1.0 / (d * variance);
}

std::vector<double> cross_validated_decision_values(const Matrix& x, std::span<const int> y, Kernel kernel,
                                                    double gamma, double C, double tolerance, std::size_t folds,
                                                    std::uint64_t seed) {
  const std::size_t n = y.size();
  folds = std::clamp<std::size_t>(folds, 2, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> values(n, 0.0);
  for (std::size_t fold = 0; fold < folds; ++fold) {
    const std::size_t begin = fold * n / folds;
    const std::size_t end = (fold + 1) * n / folds;
    std::vector<std::size_t> train;
    for (std::size_t k = 0; k < n; ++k) {
      if (k < begin || k >= end) train.push_back(order[k]);
    }
    Matrix xt(static_cast<Eigen::Index>(train.size()), x.cols());
    std::vector<int> yt(train.size());
    int positives = 0, negatives = 0;
    for (std::size_t k = 0; k < train.size(); ++k) {
      xt.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(train[k]));
      yt[k] = y[train[k]];
      (yt[k] == 1 ? positives : negatives)++;
    }
    if (positives == 0 || negatives == 0) {
      for (std::size_t k = begin; k < end; ++k) values[order[k]] = positives > 0 ? 1.0 : -1.0;
      continue;
    }
    const auto solution = solve_binary_svm(xt, yt, kernel, gamma, C, tolerance);
    const BinarySvm machine = to_decision_function(xt, yt, kernel, gamma, solution);
    for (std::size_t k = begin; k < end; ++k) {
      values[order[k]] = machine.decision(row_span(x, static_cast<Eigen::Index>(order[k])));
    }
  }
  return values;
}

SvmModel fit_svm(const Matrix& x, std::span<const EngagementLevel> y, const SvmParams& params, std::uint64_t seed) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorKind::dimension, "SVM samples and labels differ in length");
  }
  std::array<std::size_t, kLevelCount> counts{0, 0, 0};
  for (auto level : y) ++counts[index_of(level)];
  for (std::size_t l = 0; l < kLevelCount; ++l) {
    if (counts[l] == 0) {
      throw Error(ErrorKind::unsupported, "level '" + std::string(to_string(level_from_index(l))) +
                                              "' is absent from the SVM training data");
    }
  }
  SvmModel model;
  model.params = params;
  model.dimension = static_cast<std::size_t>(x.cols());
  model.gamma = params.kernel == Kernel::rbf ? (params.gamma > 0.0 ? params.gamma : default_gamma(x)) : 0.0;

  for (std::size_t l = 0; l < kLevelCount; ++l) {
    std::vector<int> binary(y.size());
    std::vector<int> zero_one(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const bool positive = index_of(y[i]) == l;
      binary[i] = positive ? 1 : -1;
      zero_one[i] = positive ? 1 : 0;
    }
    const auto solution = solve_binary_svm(x, binary, params.kernel, model.gamma, params.C, params.tolerance,
                                           params.max_iterations);
    model.machines[l] = to_decision_function(x, binary, params.kernel, model.gamma, solution);
    // Levels with fewer than two examples keep the default sigmoid.
    if (counts[l] >= 2) {
      const auto values = cross_validated_decision_values(x, binary, params.kernel, model.gamma, params.C,
                                                          params.tolerance, params.platt_folds, seed + l);
      model.calibration[l] = platt_calibrate(values, zero_one);
      model.calibrated[l] = true;
    }
  }
  return model;
}

std::array<double, kLevelCount> svm_raw_probabilities(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.dimension) {
    throw Error(ErrorKind::dimension, "SVM input length " + std::to_string(x.size()) + ", model expects " +
                                          std::to_string(model.dimension));
  }
  std::array<double, kLevelCount> raw{};
  for (std::size_t l = 0; l < kLevelCount; ++l) {
    raw[l] = model.calibration[l].probability(model.machines[l].decision(x));
  }
  return raw;
}

LabelDistribution svm_predict(const SvmModel& model, std::span<const double> x) {
  return LabelDistribution::normalized(svm_raw_probabilities(model, x));
}

nlohmann::json svm_to_json(const SvmModel& model) {
  nlohmann::json machines = nlohmann::json::array();
  for (std::size_t l = 0; l < kLevelCount; ++l) {
    const auto& m = model.machines[l];
    std::vector<double> flat(m.support_vectors.data(), m.support_vectors.data() + m.support_vectors.size());
    machines.push_back({{"support_vectors", flat},
                        {"rows", m.support_vectors.rows()},
                        {"coefficients", m.coefficients},
                        {"bias", m.bias},
                        {"platt_a", model.calibration[l].a},
                        {"platt_b", model.calibration[l].b},
                        {"calibrated", model.calibrated[l]}});
  }
  return {{"kernel", model.params.kernel == Kernel::linear ? "linear" : "rbf"},
          {"C", model.params.C},
          {"gamma", model.gamma},
          {"tolerance", model.params.tolerance},
          {"platt_folds", model.params.platt_folds},
          {"dimension", model.dimension},
          {"machines", machines}};
}

SvmModel svm_from_json(const nlohmann::json& doc) {
  SvmModel model;
  model.params.kernel = doc.at("kernel").get<std::string>() == "linear" ? Kernel::linear : Kernel::rbf;
  model.params.C = doc.at("C").get<double>();
  model.gamma = doc.at("gamma").get<double>();
  model.params.gamma = model.gamma;
  model.params.tolerance = doc.value("tolerance", 1e-3);
  model.params.platt_folds = doc.value("platt_folds", std::size_t{5});
  model.dimension = doc.at("dimension").get<std::size_t>();
  const auto& machines = doc.at("machines");
  if (machines.size() != kLevelCount) throw Error(ErrorKind::parse, "SVM model needs three machines");
  for (std::size_t l = 0; l < kLevelCount; ++l) {
    const auto& m = machines[l];
    auto& machine = model.machines[l];
    machine.kernel = model.params.kernel;
    machine.gamma = model.gamma;
    const auto rows = m.at("rows").get<Eigen::Index>();
    const auto flat = m.at("support_vectors").get<std::vector<double>>();
    const auto cols = static_cast<Eigen::Index>(model.dimension);
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw Error(ErrorKind::parse, "SVM support vector size");
    machine.support_vectors = Eigen::Map<const Matrix>(flat.data(), rows, cols);
    machine.coefficients = m.at("coefficients").get<std::vector<double>>();
    machine.bias = m.at("bias").get<double>();
    model.calibration[l] = {m.at("platt_a").get<double>(), m.at("platt_b").get<double>()};
    model.calibrated[l] = m.value("calibrated", true);
  }
  return model;
}

}  // namespace engage
