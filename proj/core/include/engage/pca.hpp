#pragma once

#include <span>

#include <nlohmann/json_fwd.hpp>

#include "engage/types.hpp"

namespace engage {

/// Principal subspace retaining a target fraction of sample variance.
///
/// Components are the leading eigenvectors of the 1/(n-1) sample covariance,
/// stored as rows. Each row is sign-normalized so that its largest-magnitude
/// coordinate is positive, which makes fits reproducible across eigensolvers.
struct PcaModel {
  Vector mean;                // D
  Matrix components;          // k x D, orthonormal rows
  Vector explained_variance;  // k, non-increasing
  Vector spectrum;            // all D eigenvalues, non-increasing
  double retained_fraction = 0.0;
  double total_variance = 0.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(components.rows()); }
};

PcaModel fit_pca(const Matrix& samples, double target_fraction = 0.99);

Vector pca_transform(const PcaModel& model, std::span<const double> x);
Matrix pca_transform_rows(const PcaModel& model, const Matrix& rows);
Vector pca_reconstruct(const PcaModel& model, const Vector& z);

nlohmann::json pca_to_json(const PcaModel& model);
PcaModel pca_from_json(const nlohmann::json& doc);

}  // namespace engage
