#include "engage/tracklets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "engage/csv.hpp"

namespace engage {

using nlohmann::json;

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::dimension, "cosine similarity of vectors with lengths " + std::to_string(a.size()) +
                                          " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) throw Error(ErrorKind::range, "cosine similarity of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

IdentityMatch assign_identity(const Detection& detection, std::span<const GalleryEntry> gallery, double threshold) {
  if (gallery.empty()) throw Error(ErrorKind::validation, "identity gallery is empty");
  IdentityMatch best;
  const GalleryEntry* winner = nullptr;
  for (const auto& entry : gallery) {
    for (const auto& query : entry.query_vectors) {
      if (query.size() != detection.identity.size()) {
        throw Error(ErrorKind::dimension, "identity vector length " + std::to_string(detection.identity.size()) +
                                              " does not match gallery entry '" + entry.student_id + "' (" +
                                              std::to_string(query.size()) + ")");
      }
      const double s = cosine_similarity(detection.identity, query);
      if (s > best.similarity) {
        best.similarity = s;
        winner = &entry;
      }
    }
  }
  if (winner != nullptr && best.similarity >= threshold) best.student_id = winner->student_id;
  return best;
}

std::optional<std::string> select_camera(std::span<const CameraEvidence> cameras) {
  const CameraEvidence* best = nullptr;
  for (const auto& c : cameras) {
    if (c.frames == 0) continue;
    if (best == nullptr) {
      best = &c;
      continue;
    }
    const auto key = [](const CameraEvidence& e) { return std::tuple(e.frames, e.mean_similarity); };
    if (key(c) > key(*best) || (key(c) == key(*best) && c.camera_id < best->camera_id)) best = &c;
  }
  if (best == nullptr) return std::nullopt;
  return best->camera_id;
}

std::vector<Sequence> extract_sequences(const Tracklet& tracklet, const std::string& session_id, int fps) {
  std::vector<Sequence> out;
  const auto& frames = tracklet.frames;
  std::size_t i = 0;
  while (i < frames.size()) {
    const std::int64_t second = frames[i].frame_index / fps;
    const std::int64_t start = second * fps;
    std::size_t j = i;
    while (j < frames.size() && frames[j].frame_index / fps == second) ++j;
    const bool complete = (j - i) >= kSequenceLength && frames[i].frame_index == start &&
                          frames[i + kSequenceLength - 1].frame_index == start + static_cast<std::int64_t>(kSequenceLength) - 1;
    if (complete) {
      std::set<Modality> modalities;
      for (std::size_t f = i; f < i + kSequenceLength; ++f) {
        for (const auto& [m, v] : frames[f].vectors) modalities.insert(m);
      }
      for (Modality m : modalities) {
        bool present = true;
        for (std::size_t f = i; f < i + kSequenceLength; ++f) present = present && frames[f].vectors.count(m);
        if (!present) continue;
        const auto dim = static_cast<Eigen::Index>(frames[i].vectors.at(m).size());
        Sequence seq{tracklet.student_id, session_id, second, m, Matrix(static_cast<Eigen::Index>(kSequenceLength), dim)};
        for (std::size_t f = 0; f < kSequenceLength; ++f) {
          const auto& v = frames[i + f].vectors.at(m);
          for (Eigen::Index d = 0; d < dim; ++d) seq.frames(static_cast<Eigen::Index>(f), d) = v[static_cast<std::size_t>(d)];
        }
        out.push_back(std::move(seq));
      }
    }
    i = j;
  }
  return out;
}

std::vector<Tracklet> build_tracklets(std::span<const Detection> detections, std::span<const GalleryEntry> gallery,
                                      double threshold) {
  std::map<std::pair<std::string, std::string>, std::map<std::int64_t, TrackletFrame>> grouped;
  for (const auto& d : detections) {
    const IdentityMatch match = assign_identity(d, gallery, threshold);
    if (!match.student_id) continue;
    auto& frames = grouped[{*match.student_id, d.camera_id}];
    auto [it, inserted] = frames.try_emplace(d.frame_index);
    if (inserted || match.similarity > it->second.similarity) {
      it->second = TrackletFrame{d.frame_index, d.modalities, match.similarity};
    }
  }
  std::vector<Tracklet> out;
  for (auto& [key, frames] : grouped) {
    Tracklet t{key.first, key.second, {}};
    t.frames.reserve(frames.size());
    for (auto& [index, frame] : frames) t.frames.push_back(std::move(frame));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Sequence> assemble_sequences(const std::vector<Tracklet>& tracklets, const std::string& session_id,
                                         int fps) {
  // (student, second) -> per-camera evidence
  std::map<std::pair<std::string, std::int64_t>, std::map<std::string, CameraEvidence>> evidence;
  for (const auto& t : tracklets) {
    for (const auto& f : t.frames) {
      auto& e = evidence[{t.student_id, f.frame_index / fps}][t.camera_id];
      e.camera_id = t.camera_id;
      e.mean_similarity += f.similarity;  // summed here, averaged below
      ++e.frames;
    }
  }
  std::map<std::pair<std::string, std::int64_t>, std::string> chosen;
  for (auto& [key, cameras] : evidence) {
    std::vector<CameraEvidence> list;
    for (auto& [id, e] : cameras) {
      e.mean_similarity /= static_cast<double>(e.frames);
      list.push_back(e);
    }
    if (auto camera = select_camera(list)) chosen[key] = *camera;
  }
  std::vector<Sequence> out;
  for (const auto& t : tracklets) {
    for (auto& seq : extract_sequences(t, session_id, fps)) {
      auto it = chosen.find({t.student_id, seq.second_index});
      if (it != chosen.end() && it->second == t.camera_id) out.push_back(std::move(seq));
    }
  }
  return out;
}

std::vector<GalleryEntry> gallery_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::parse, "gallery must map student_id to arrays of vectors");
  std::vector<GalleryEntry> out;
  for (const auto& [student, vectors] : doc.items()) {
    GalleryEntry entry{student, {}};
    try {
      entry.query_vectors = vectors.get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, "gallery entry '" + student + "': " + e.what());
    }
    if (entry.query_vectors.empty()) {
      throw Error(ErrorKind::validation, "gallery entry '" + student + "' has no query vectors");
    }
    for (const auto& v : entry.query_vectors) {
      double norm = 0.0;
      for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorKind::validation, "gallery entry '" + student + "' is not finite");
        norm += x * x;
      }
      if (norm == 0.0) throw Error(ErrorKind::validation, "gallery entry '" + student + "' has a zero vector");
    }
    out.push_back(std::move(entry));
  }
  return out;
}

json gallery_to_json(std::span<const GalleryEntry> gallery) {
  json doc = json::object();
  for (const auto& e : gallery) doc[e.student_id] = e.query_vectors;
  return doc;
}

std::vector<GalleryEntry> load_gallery(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open gallery " + path.string());
  try {
    return gallery_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, "gallery " + path.string() + ": " + e.what());
  }
}

std::vector<Detection> parse_detections(std::istream& in, const DatasetManifest& manifest) {
  std::string header_line;
  if (!std::getline(in, header_line)) throw Error(ErrorKind::parse, "detections file is missing its header (row 1)");
  const auto header = csv::split_line(header_line);
  std::vector<std::size_t> id_columns;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind("id_d", 0) == 0) id_columns.push_back(i);
  }
  if (id_columns.empty()) throw Error(ErrorKind::parse, "detections header lacks id_d* columns");
  if (manifest.identity_dim != 0 && id_columns.size() != manifest.identity_dim) {
    throw Error(ErrorKind::parse, "detections declare " + std::to_string(id_columns.size()) +
                                      " identity columns, manifest expects " + std::to_string(manifest.identity_dim));
  }
  // Re-read the body twice: once as embeddings (validates modality vectors), once for identity columns.
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream embeddings_in(header_line + "\n" + body);
  const auto frames = parse_embedding_table(embeddings_in, manifest);

  std::istringstream id_in(body);
  std::string line;
  std::size_t row = 1;
  std::vector<std::vector<double>> identities;
  while (std::getline(id_in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split_line(line);
    std::vector<double> id;
    id.reserve(id_columns.size());
    for (std::size_t c : id_columns) id.push_back(csv::parse_double(fields[c], row, header[c]));
    double norm = 0.0;
    for (double x : id) norm += x * x;
    if (norm == 0.0) throw Error(ErrorKind::parse, "zero identity vector at row " + std::to_string(row));
    identities.push_back(std::move(id));
  }

  std::vector<Detection> out;
  std::map<std::tuple<std::string, std::string, std::int64_t, std::vector<double>>, std::size_t> index;
  for (std::size_t r = 0; r < frames.size(); ++r) {
    const auto& f = frames[r];
    auto key = std::tuple(f.session_id, f.camera_id, f.frame_index, identities[r]);
    auto [it, inserted] = index.try_emplace(std::move(key), out.size());
    if (inserted) out.push_back(Detection{f.session_id, f.camera_id, f.frame_index, identities[r], {}});
    out[it->second].modalities[f.modality] = f.vector;
  }
  return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open " + path.string());
  try {
    return parse_detections(in, manifest);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_detections(std::ostream& out, std::span<const Detection> detections) {
  std::vector<FrameEmbedding> rows;
  std::vector<std::vector<double>> ids;
  std::size_t id_dim = 0;
  for (const auto& d : detections) {
    id_dim = std::max(id_dim, d.identity.size());
    for (const auto& [m, v] : d.modalities) {
      rows.push_back(FrameEmbedding{d.session_id, "", d.camera_id, d.frame_index, m, v});
      ids.push_back(d.identity);
    }
  }
  write_embedding_table(out, rows, id_dim, &ids);
}

std::vector<FrameEmbedding> sequences_to_frames(std::span<const Sequence> sequences, const std::string& camera_id,
                                                int fps) {
  std::vector<FrameEmbedding> rows;
  for (const auto& s : sequences) {
    for (Eigen::Index f = 0; f < s.frames.rows(); ++f) {
      const auto r = row_span(s.frames, f);
      rows.push_back(FrameEmbedding{s.session_id, s.student_id, camera_id, s.second_index * fps + f, s.modality,
                                    std::vector<double>(r.begin(), r.end())});
    }
  }
  return rows;
}

}  // namespace engage
