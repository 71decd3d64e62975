#include "engage/pca.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace engage {

PcaModel fit_pca(const Matrix& samples, double target_fraction) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 2) throw Error(ErrorKind::validation, "PCA needs at least two samples");
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) {
    throw Error(ErrorKind::validation, "PCA target fraction must lie in (0, 1]");
  }
  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  model.total_variance = covariance.trace();
  if (!(model.total_variance > 0.0)) throw Error(ErrorKind::degenerate, "PCA input has zero total variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::degenerate, "covariance eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  model.spectrum.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) model.spectrum(i) = std::max(0.0, solver.eigenvalues()(d - 1 - i));

  const double spectrum_sum = model.spectrum.sum();
  Eigen::Index k = 0;
  double cumulative = 0.0;
  while (k < d) {
    cumulative += model.spectrum(k);
    ++k;
    if (cumulative / spectrum_sum >= target_fraction - 1e-12) break;
  }
  model.retained_fraction = std::min(1.0, cumulative / spectrum_sum);
  model.explained_variance = model.spectrum.head(k);
  model.components.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    Vector v = solver.eigenvectors().col(d - 1 - i);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    model.components.row(i) = v.transpose();
  }
  return model;
}

Vector pca_transform(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw Error(ErrorKind::dimension, "PCA input length " + std::to_string(x.size()) + ", model expects " +
                                          std::to_string(model.input_dim()));
  }
  const Eigen::Map<const Vector> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return model.components * (v - model.mean);
}

Matrix pca_transform_rows(const PcaModel& model, const Matrix& rows) {
  if (static_cast<std::size_t>(rows.cols()) != model.input_dim()) {
    throw Error(ErrorKind::dimension, "PCA input width " + std::to_string(rows.cols()) + ", model expects " +
                                          std::to_string(model.input_dim()));
  }
  return (rows.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Vector pca_reconstruct(const PcaModel& model, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != model.output_dim()) {
    throw Error(ErrorKind::dimension, "PCA code length mismatch");
  }
  return model.mean + model.components.transpose() * z;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json pca_to_json(const PcaModel& model) {
  nlohmann::json components = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.components.rows(); ++i) {
    components.push_back(to_std(model.components.row(i).transpose()));
  }
  return {{"mean", to_std(model.mean)},
          {"components", components},
          {"explained_variance", to_std(model.explained_variance)},
          {"spectrum", to_std(model.spectrum)},
          {"retained_fraction", model.retained_fraction},
          {"total_variance", model.total_variance}};
}

PcaModel pca_from_json(const nlohmann::json& doc) {
  PcaModel model;
  model.mean = from_std(doc.at("mean").get<std::vector<double>>());
  const auto rows = doc.at("components").get<std::vector<std::vector<double>>>();
  model.components.resize(static_cast<Eigen::Index>(rows.size()), model.mean.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != static_cast<std::size_t>(model.mean.size())) {
      throw Error(ErrorKind::parse, "PCA component length does not match mean");
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      model.components(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  model.explained_variance = from_std(doc.at("explained_variance").get<std::vector<double>>());
  if (doc.contains("spectrum")) model.spectrum = from_std(doc["spectrum"].get<std::vector<double>>());
  model.retained_fraction = doc.value("retained_fraction", 0.0);
  model.total_variance = doc.value("total_variance", 0.0);
  return model;
}

}  // namespace engage
