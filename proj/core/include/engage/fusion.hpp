#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "engage/classifier.hpp"
#include "engage/types.hpp"

namespace engage {

/// Aligned attention and affect sequences of one student-second.
struct ModalityPair {
  Sequence attention;
  Sequence affect;

  void validate() const;
};

struct SequencePrediction {
  std::int64_t second_index = 0;
  EngagementLevel level = EngagementLevel::low;
  std::vector<LabelDistribution> frame_distributions;  // empty for sequence-mode models
  LabelDistribution aggregate;
};

/// Concatenation [a | b].
std::vector<double> fuse_features(std::span<const double> a, std::span<const double> b);
/// Frame-wise concatenation of two equally long sequences.
Matrix fuse_feature_frames(const Matrix& a, const Matrix& b);

/// Unweighted element-wise mean.
LabelDistribution fuse_scores(const LabelDistribution& p, const LabelDistribution& q);

/// Most frequent level over 24 frames; ties go to the larger summed probability
/// over the tied levels, then to the lower level.
EngagementLevel majority_vote(std::span<const EngagementLevel> frame_levels,
                              std::span<const LabelDistribution> frame_distributions);

/// Frame-mode: 24 per-frame predictions and a vote; aggregate is their mean.
/// Sequence-mode: one prediction, aggregate equals it.
SequencePrediction predict_sequence(const TrainedModel& model, const Sequence& sequence);

/// Score-level fusion: per-frame (or per-sequence) distributions of the two
/// models are averaged before voting.
SequencePrediction predict_sequence(const TrainedModel& attention_model, const TrainedModel& affect_model,
                                    const ModalityPair& pair);

struct PredictionRow {
  std::string student_id;
  std::string session_id;
  std::int64_t second = 0;
  EngagementLevel level = EngagementLevel::low;
  LabelDistribution distribution;
};

/// `student_id,session_id,second,level,p_low,p_medium,p_high`
void write_predictions_csv(std::ostream& out, std::span<const PredictionRow> rows);

}  // namespace engage
