#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include <nlohmann/json_fwd.hpp>

#include "engage/forest.hpp"
#include "engage/lstm.hpp"
#include "engage/mlp.hpp"
#include "engage/pca.hpp"
#include "engage/svm.hpp"
#include "engage/types.hpp"

namespace engage {

enum class Family { svm_linear, svm_rbf, random_forest, mlp, lstm };
enum class InputMode { middle_frame, full_sequence };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);
std::string_view to_string(InputMode mode);

/// Family choice plus every family's hyperparameters; only the selected
/// family's block is used.
struct ClassifierSpec {
  Family family = Family::random_forest;
  InputMode input_mode = InputMode::middle_frame;
  std::uint64_t seed = 0;
  SvmParams svm;
  ForestParams forest;
  MlpParams mlp;
  LstmParams lstm;
  /// PCA before SVM training; ignored for other families.
  bool svm_pca = true;
  double pca_fraction = 0.99;

  /// Spec for `family` with its matching input mode.
  static ClassifierSpec defaults(Family family, std::uint64_t seed = 0);
  void validate() const;
};

nlohmann::json spec_to_json(const ClassifierSpec& spec);
/// Missing keys keep defaults; unknown keys are rejected.
ClassifierSpec spec_from_json(const nlohmann::json& doc);

/// A fitted probabilistic classifier over frames (or whole sequences for LSTM).
struct TrainedModel {
  ClassifierSpec spec;
  std::optional<PcaModel> pca;
  std::variant<SvmModel, ForestModel, MlpModel, LstmModel> state;
  TrainingReport report;
  std::size_t input_dim = 0;

  InputMode input_mode() const { return spec.input_mode; }
};

/// Trains on the middle frame of each sequence (frame mode) or the whole
/// sequence (LSTM). SVM fits PCA on the training rows first.
TrainedModel fit_classifier(const ClassifierSpec& spec, std::span<const Matrix> sequences,
                            std::span<const EngagementLevel> labels);

/// Frame-mode prediction on one frame vector.
LabelDistribution predict_distribution(const TrainedModel& model, std::span<const double> frame);
/// Sequence-mode prediction (LSTM only).
LabelDistribution predict_distribution(const TrainedModel& model, const Matrix& sequence);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& doc);

}  // namespace engage
