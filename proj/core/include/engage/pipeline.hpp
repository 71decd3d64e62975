#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/classifier.hpp"
#include "engage/fusion.hpp"
#include "engage/ingest.hpp"

namespace engage {

/// Which modality data a model consumes.
enum class InputSelection { attention, affect, feature_fusion, score_fusion };

std::string_view to_string(InputSelection selection);
InputSelection parse_input_selection(std::string_view text);

struct PipelineSpec {
  ClassifierSpec classifier;
  InputSelection input = InputSelection::attention;
};

nlohmann::json pipeline_spec_to_json(const PipelineSpec& spec);
PipelineSpec pipeline_spec_from_json(const nlohmann::json& doc);

/// One labeled student-second with whatever modalities were available.
struct Sample {
  std::string student_id;
  std::string session_id;
  std::int64_t second = 0;
  EngagementLevel level = EngagementLevel::low;
  double rating = 0.0;
  std::optional<Matrix> attention;
  std::optional<Matrix> affect;

  bool has(InputSelection selection) const;
  const Matrix& modality(Modality m) const;
};

/// Groups per-modality entries by (student, session, second); output is sorted
/// by that key.
std::vector<Sample> assemble_samples(const LabeledSequenceSet& set);

/// Samples usable under `selection` (both modalities for fusion).
std::vector<Sample> filter_samples(std::span<const Sample> samples, InputSelection selection);

/// One model, or two for score-level fusion (attention first).
struct EngagementModel {
  PipelineSpec spec;
  std::vector<TrainedModel> models;
};

EngagementModel fit_engagement_model(const PipelineSpec& spec, std::span<const Sample> samples);

/// Per-second prediction for one sample under the model's input selection.
SequencePrediction predict_sample(const EngagementModel& model, const Sample& sample);

/// Distribution used for margin scoring: middle frame for frame-mode models,
/// the full sequence otherwise (score fusion averages both models).
LabelDistribution uncertainty_distribution(const EngagementModel& model, const Sample& sample);

nlohmann::json engagement_model_to_json(const EngagementModel& model);
EngagementModel engagement_model_from_json(const nlohmann::json& doc);

}  // namespace engage
