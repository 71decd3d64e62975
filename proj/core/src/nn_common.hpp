#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "engage/types.hpp"

namespace engage::nn {

inline void fan_uniform(Matrix& m, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, fan_in)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

/// Row-wise softmax in place.
inline void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double peak = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - peak).exp();
    z.row(r) /= z.row(r).sum();
  }
}

/// Mean cross-entropy of probabilities against labels.
inline double cross_entropy(const Matrix& probabilities, std::span<const EngagementLevel> y) {
  double loss = 0.0;
  for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
    loss -= std::log(std::max(probabilities(r, static_cast<Eigen::Index>(index_of(y[static_cast<std::size_t>(r)]))), 1e-300));
  }
  return loss / static_cast<double>(probabilities.rows());
}

/// (P - Y) / n, the logits gradient of the mean cross-entropy.
inline Matrix softmax_gradient(const Matrix& probabilities, std::span<const EngagementLevel> y) {
  Matrix g = probabilities;
  for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, static_cast<Eigen::Index>(index_of(y[static_cast<std::size_t>(r)]))) -= 1.0;
  return g / static_cast<double>(g.rows());
}

inline Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

class Adam {
 public:
  Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(static_cast<Eigen::Index>(size))),
        v_(Vector::Zero(static_cast<Eigen::Index>(size))) {}

  void step(Vector& params, const Vector& gradient) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
    v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseProduct(gradient);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  std::size_t t_ = 0;
};

/// Appends `m` to `flat` at `offset` in row-major order.
template <typename M>
void pack(const M& m, Vector& flat, Eigen::Index& offset) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat(offset++) = m(r, c);
  }
}

template <typename M>
void unpack(M& m, const Vector& flat, Eigen::Index& offset) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat(offset++);
  }
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& doc) {
  const auto rows = doc.at("rows").get<Eigen::Index>();
  const auto cols = doc.at("cols").get<Eigen::Index>();
  const auto data = doc.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error(ErrorKind::parse, "matrix size mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

inline nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& doc) {
  const auto data = doc.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace engage::nn
