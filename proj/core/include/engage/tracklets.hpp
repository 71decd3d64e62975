#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/ingest.hpp"
#include "engage/types.hpp"

namespace engage {

struct GalleryEntry {
  std::string student_id;
  std::vector<std::vector<double>> query_vectors;
};

struct Detection {
  std::string session_id;
  std::string camera_id;
  std::int64_t frame_index = 0;
  std::vector<double> identity;
  std::map<Modality, std::vector<double>> modalities;
};

struct IdentityMatch {
  std::optional<std::string> student_id;  // nullopt: unknown face
  double similarity = -1.0;               // best similarity over the whole gallery
};

struct TrackletFrame {
  std::int64_t frame_index = 0;
  std::map<Modality, std::vector<double>> vectors;
  double similarity = 0.0;
};

struct Tracklet {
  std::string student_id;
  std::string camera_id;
  std::vector<TrackletFrame> frames;  // strictly increasing frame_index
};

/// Per-camera evidence for one student-second.
struct CameraEvidence {
  std::string camera_id;
  std::size_t frames = 0;
  double mean_similarity = 0.0;
};

inline constexpr double kDefaultIdentityThreshold = 0.3;

double cosine_similarity(std::span<const double> a, std::span<const double> b);

IdentityMatch assign_identity(const Detection& detection, std::span<const GalleryEntry> gallery,
                              double threshold = kDefaultIdentityThreshold);

/// Camera with more frames; ties by higher mean similarity, then smaller camera_id.
/// Returns nullopt when no camera has a frame.
std::optional<std::string> select_camera(std::span<const CameraEvidence> cameras);

/// One Sequence per modality for every fully covered second [24k, 24k+23].
std::vector<Sequence> extract_sequences(const Tracklet& tracklet, const std::string& session_id,
                                        int fps = kDefaultFps);

/// Greedy per-detection assignment into (student, camera) tracklets for one session.
/// A student seen twice in the same frame of one camera keeps the more similar face.
std::vector<Tracklet> build_tracklets(std::span<const Detection> detections, std::span<const GalleryEntry> gallery,
                                      double threshold = kDefaultIdentityThreshold);

/// Camera selection per student-second followed by sequence extraction.
std::vector<Sequence> assemble_sequences(const std::vector<Tracklet>& tracklets, const std::string& session_id,
                                         int fps = kDefaultFps);

std::vector<GalleryEntry> gallery_from_json(const nlohmann::json& doc);
nlohmann::json gallery_to_json(std::span<const GalleryEntry> gallery);
std::vector<GalleryEntry> load_gallery(const std::filesystem::path& path);

/// Detections CSV: embeddings columns plus id_d0..id_d{Did-1}. Rows sharing
/// session, camera, frame and identity vector form one detection.
std::vector<Detection> parse_detections(std::istream& in, const DatasetManifest& manifest);
std::vector<Detection> load_detections(const std::filesystem::path& path, const DatasetManifest& manifest);
void write_detections(std::ostream& out, std::span<const Detection> detections);

/// Flattens sequences back into embeddings CSV rows (camera column set to `camera_id`).
std::vector<FrameEmbedding> sequences_to_frames(std::span<const Sequence> sequences, const std::string& camera_id,
                                                int fps = kDefaultFps);

}  // namespace engage
