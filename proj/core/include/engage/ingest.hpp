#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/types.hpp"

namespace engage {

struct FrameEmbedding {
  std::string session_id;
  std::string student_id;
  std::string camera_id;
  std::int64_t frame_index = 0;
  Modality modality = Modality::attention;
  std::vector<double> vector;
};

struct RaterSeries {
  std::string rater_id;
  std::map<std::int64_t, double> values;  // second -> rating in [-2, 2]
};

struct ContinuousEngagementSeries {
  std::map<std::int64_t, double> values;
};

struct Thresholds {
  double low = 0.35;
  double high = 0.65;
};

struct SessionFiles {
  std::string session_id;
  std::string grade;
  std::map<std::string, std::filesystem::path> embeddings;  // camera_id -> CSV
  std::map<std::string, std::filesystem::path> ratings;     // rater_id -> CSV
};

struct DatasetManifest {
  std::map<Modality, std::size_t> modality_dims;
  std::size_t identity_dim = 0;
  std::vector<SessionFiles> sessions;
  std::filesystem::path gallery;
  Thresholds thresholds;
  int fps = kDefaultFps;

  /// Throws ErrorKind::validation when an invariant is broken.
  void validate() const;
  std::size_t dimension(Modality modality) const;
};

/// Relative paths in the document are resolved against `base_dir`.
DatasetManifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

std::vector<FrameEmbedding> parse_embedding_table(std::istream& in, const DatasetManifest& manifest);
std::vector<FrameEmbedding> load_embedding_table(const std::filesystem::path& path,
                                                 const DatasetManifest& manifest);
void write_embedding_table(std::ostream& out, const std::vector<FrameEmbedding>& rows,
                           std::size_t identity_dim = 0,
                           const std::vector<std::vector<double>>* identity_vectors = nullptr);

/// (session_id, student_id) -> rater_id -> series.
using RatingTable = std::map<std::pair<std::string, std::string>, std::map<std::string, RaterSeries>>;

void parse_ratings(std::istream& in, RatingTable& table);
RatingTable load_ratings(const std::vector<std::filesystem::path>& paths);

ContinuousEngagementSeries average_raters(const RaterSeries& a, const RaterSeries& b);

/// ICC(2,k) for k=2 raters over the seconds both raters covered.
double icc_absolute_agreement(const RaterSeries& a, const RaterSeries& b);

EngagementLevel discretize_engagement(double value, const Thresholds& thresholds = {});

struct LabeledSequence {
  Sequence sequence;
  EngagementLevel level = EngagementLevel::low;
  double rating = 0.0;
};

struct LabeledSequenceSet {
  std::vector<LabeledSequence> entries;
};

/// student_id -> session_id -> rater mean.
using LabelTable = std::map<std::string, std::map<std::string, ContinuousEngagementSeries>>;

struct BuildResult {
  LabeledSequenceSet set;
  std::size_t dropped = 0;
};

BuildResult build_labeled_dataset(const DatasetManifest& manifest, std::vector<Sequence> sequences,
                                  const LabelTable& labels);

/// Groups frame rows into complete 24-frame sequences, one per
/// (session, student, second, modality). When several cameras cover the same
/// student-second the one with more frames wins, then the smaller camera_id.
std::vector<Sequence> group_sequences(const std::vector<FrameEmbedding>& frames, int fps = kDefaultFps);

/// Fraction of entries per level; sums to one for a non-empty set.
std::array<double, kLevelCount> level_fractions(const LabeledSequenceSet& set);

struct RaterAgreement {
  std::string session_id;
  std::string student_id;
  std::optional<double> icc;
  std::string note;
};

struct IngestResult {
  LabeledSequenceSet set;
  std::size_t dropped = 0;
  std::vector<RaterAgreement> agreement;
  std::map<std::string, std::string> student_grades;
};

/// Full manifest-driven ingest: embeddings, ratings, rater merge, labeling.
IngestResult ingest_manifest(const DatasetManifest& manifest);

}  // namespace engage
