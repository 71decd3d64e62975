#include "engage/fusion.hpp"

#include <ostream>

#include "engage/csv.hpp"

namespace engage {

void ModalityPair::validate() const {
  if (attention.student_id != affect.student_id || attention.session_id != affect.session_id ||
      attention.second_index != affect.second_index) {
    throw Error(ErrorKind::validation, "modality pair mixes different student-seconds");
  }
  if (static_cast<std::size_t>(attention.frames.rows()) != kSequenceLength ||
      static_cast<std::size_t>(affect.frames.rows()) != kSequenceLength) {
    throw Error(ErrorKind::shape, "modality pair sequences must have 24 frames");
  }
}

std::vector<double> fuse_features(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Matrix fuse_feature_frames(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::shape, "feature fusion of sequences with different lengths");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

LabelDistribution fuse_scores(const LabelDistribution& p, const LabelDistribution& q) {
  LabelDistribution out;
  for (std::size_t l = 0; l < kLevelCount; ++l) out.p[l] = 0.5 * (p.p[l] + q.p[l]);
  return out;
}

EngagementLevel majority_vote(std::span<const EngagementLevel> frame_levels,
                              std::span<const LabelDistribution> frame_distributions) {
  if (frame_levels.size() != kSequenceLength || frame_distributions.size() != kSequenceLength) {
    throw Error(ErrorKind::shape, "majority vote needs exactly 24 frames, got " + std::to_string(frame_levels.size()));
  }
  std::array<std::size_t, kLevelCount> votes{0, 0, 0};
  std::array<double, kLevelCount> mass{0.0, 0.0, 0.0};
  for (auto level : frame_levels) ++votes[index_of(level)];
  for (const auto& d : frame_distributions) {
    for (std::size_t l = 0; l < kLevelCount; ++l) mass[l] += d.p[l];
  }
  std::size_t best = 0;
  for (std::size_t l = 1; l < kLevelCount; ++l) {
    if (votes[l] > votes[best] || (votes[l] == votes[best] && mass[l] > mass[best])) best = l;
  }
  return level_from_index(best);
}

namespace {

SequencePrediction vote_frames(std::int64_t second, std::vector<LabelDistribution> frames) {
  SequencePrediction out;
  out.second_index = second;
  std::vector<EngagementLevel> levels;
  levels.reserve(frames.size());
  std::array<double, kLevelCount> sum{0.0, 0.0, 0.0};
  for (const auto& d : frames) {
    levels.push_back(d.argmax());
    for (std::size_t l = 0; l < kLevelCount; ++l) sum[l] += d.p[l];
  }
  out.level = majority_vote(levels, frames);
  for (std::size_t l = 0; l < kLevelCount; ++l) out.aggregate.p[l] = sum[l] / static_cast<double>(frames.size());
  out.frame_distributions = std::move(frames);
  return out;
}

std::vector<LabelDistribution> frame_predictions(const TrainedModel& model, const Matrix& frames) {
  if (static_cast<std::size_t>(frames.rows()) != kSequenceLength) {
    throw Error(ErrorKind::shape, "sequence has " + std::to_string(frames.rows()) + " frames, expected 24");
  }
  std::vector<LabelDistribution> out;
  out.reserve(kSequenceLength);
  for (Eigen::Index f = 0; f < frames.rows(); ++f) out.push_back(predict_distribution(model, row_span(frames, f)));
  return out;
}

}  // namespace

SequencePrediction predict_sequence(const TrainedModel& model, const Sequence& sequence) {
  if (model.input_mode() == InputMode::full_sequence) {
    SequencePrediction out;
    out.second_index = sequence.second_index;
    out.aggregate = predict_distribution(model, sequence.frames);
    out.level = out.aggregate.argmax();
    return out;
  }
  return vote_frames(sequence.second_index, frame_predictions(model, sequence.frames));
}

SequencePrediction predict_sequence(const TrainedModel& attention_model, const TrainedModel& affect_model,
                                    const ModalityPair& pair) {
  pair.validate();
  if (attention_model.input_mode() != affect_model.input_mode()) {
    throw Error(ErrorKind::validation, "score fusion needs two models with the same input mode");
  }
  if (attention_model.input_mode() == InputMode::full_sequence) {
    SequencePrediction out;
    out.second_index = pair.attention.second_index;
    out.aggregate = fuse_scores(predict_distribution(attention_model, pair.attention.frames),
                                predict_distribution(affect_model, pair.affect.frames));
    out.level = out.aggregate.argmax();
    return out;
  }
  auto a = frame_predictions(attention_model, pair.attention.frames);
  const auto b = frame_predictions(affect_model, pair.affect.frames);
  for (std::size_t f = 0; f < a.size(); ++f) a[f] = fuse_scores(a[f], b[f]);
  return vote_frames(pair.attention.second_index, std::move(a));
}

void write_predictions_csv(std::ostream& out, std::span<const PredictionRow> rows) {
  out << "student_id,session_id,second,level,p_low,p_medium,p_high\n";
  for (const auto& r : rows) {
    out << r.student_id << ',' << r.session_id << ',' << r.second << ',' << to_string(r.level);
    for (double p : r.distribution.p) out << ',' << csv::format_double(p);
    out << '\n';
  }
}

}  // namespace engage
