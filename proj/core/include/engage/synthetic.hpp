#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "engage/ingest.hpp"
#include "engage/tracklets.hpp"

namespace engage {

/// Desk-scale stand-in for a classroom corpus: Gaussian level clusters per
/// modality, a random offset per student, modality and level, Markov level runs.
struct SyntheticConfig {
  std::size_t students = 8;
  std::size_t seconds = 400;  // per student
  double separation = 3.0;    // pairwise distance between level centers
  double subject_shift = 0.0; // norm of each per-student center offset
  double noise = 1.0;         // RMS norm of a frame's noise vector
  /// Share of the frame variance that is common to all 24 frames of a second.
  double second_share = 0.5;
  std::size_t dimension = 3;  // per modality
  double stay_probability = 0.9;
  std::size_t students_per_session = 4;
  std::size_t grades = 1;
  /// Cameras per session for the detection streams; 0 skips them.
  std::size_t cameras = 0;
  std::size_t identity_dim = 8;
  Thresholds thresholds;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  SyntheticConfig config;
  LabeledSequenceSet set;
  std::map<std::string, std::string> student_grades;
  std::map<std::string, std::string> student_sessions;
  RatingTable ratings;
  std::vector<GalleryEntry> gallery;
  std::vector<Detection> detections;
};

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& config);

/// Writes manifest.json, per-session embeddings and ratings CSVs, the gallery
/// and (when present) detections. Output is byte-identical for equal inputs.
std::filesystem::path write_synthetic_dataset(const SyntheticDataset& dataset, const std::filesystem::path& dir);

}  // namespace engage
