#include "engage/ingest.hpp"

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

namespace {

void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  if (!object.is_object()) {
    throw Error(ErrorKind::validation, std::string(where) + " must be a JSON object");
  }
  for (const auto& [key, value] : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::validation, "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open " + path.string());
  return in;
}

}  // namespace

void DatasetManifest::validate() const {
  if (!(thresholds.low < thresholds.high)) {
    throw Error(ErrorKind::validation, "thresholds must satisfy low < high");
  }
  if (!(thresholds.low > -2.0 && thresholds.high < 2.0)) {
    throw Error(ErrorKind::validation, "thresholds must lie inside (-2, 2)");
  }
  if (fps <= 0) throw Error(ErrorKind::validation, "fps must be positive");
  if (modality_dims.empty()) throw Error(ErrorKind::validation, "manifest declares no modality");
  for (const auto& [modality, dim] : modality_dims) {
    if (dim == 0) {
      throw Error(ErrorKind::validation, "modality '" + std::string(to_string(modality)) + "' has zero dimension");
    }
  }
  std::set<std::string> ids;
  for (const auto& session : sessions) {
    if (!ids.insert(session.session_id).second) {
      throw Error(ErrorKind::validation, "duplicate session_id '" + session.session_id + "'");
    }
    if (session.ratings.size() > 2) {
      throw Error(ErrorKind::validation, "session '" + session.session_id + "' lists more than two raters");
    }
  }
}

std::size_t DatasetManifest::dimension(Modality modality) const {
  auto it = modality_dims.find(modality);
  if (it == modality_dims.end()) {
    throw Error(ErrorKind::validation, "manifest does not declare modality '" + std::string(to_string(modality)) + "'");
  }
  return it->second;
}

DatasetManifest manifest_from_json(const json& doc, const std::filesystem::path& base_dir) {
  reject_unknown_keys(doc, {"modality_dims", "identity_dim", "sessions", "gallery", "thresholds", "fps"}, "manifest");
  DatasetManifest m;
  try {
    for (const auto& [name, dim] : doc.at("modality_dims").items()) {
      m.modality_dims[parse_modality(name)] = dim.get<std::size_t>();
    }
    if (doc.contains("identity_dim")) m.identity_dim = doc["identity_dim"].get<std::size_t>();
    if (doc.contains("gallery")) m.gallery = resolve(base_dir, doc["gallery"].get<std::string>());
    if (doc.contains("fps")) m.fps = doc["fps"].get<int>();
    if (doc.contains("thresholds")) {
      const auto& t = doc["thresholds"];
      reject_unknown_keys(t, {"low", "high"}, "manifest.thresholds");
      if (t.contains("low")) m.thresholds.low = t["low"].get<double>();
      if (t.contains("high")) m.thresholds.high = t["high"].get<double>();
    }
    if (doc.contains("sessions")) {
      for (const auto& s : doc["sessions"]) {
        reject_unknown_keys(s, {"session_id", "grade", "embeddings", "ratings"}, "manifest.sessions[]");
        SessionFiles files;
        files.session_id = s.at("session_id").get<std::string>();
        if (s.contains("grade")) {
          files.grade = s["grade"].is_string() ? s["grade"].get<std::string>() : s["grade"].dump();
        }
        if (s.contains("embeddings")) {
          for (const auto& [camera, path] : s["embeddings"].items()) {
            files.embeddings[camera] = resolve(base_dir, path.get<std::string>());
          }
        }
        if (s.contains("ratings")) {
          for (const auto& [rater, path] : s["ratings"].items()) {
            files.ratings[rater] = resolve(base_dir, path.get<std::string>());
          }
        }
        m.sessions.push_back(std::move(files));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

json manifest_to_json(const DatasetManifest& m) {
  json doc;
  json dims = json::object();
  for (const auto& [modality, dim] : m.modality_dims) dims[std::string(to_string(modality))] = dim;
  doc["modality_dims"] = dims;
  if (m.identity_dim > 0) doc["identity_dim"] = m.identity_dim;
  if (!m.gallery.empty()) doc["gallery"] = m.gallery.string();
  doc["thresholds"] = {{"low", m.thresholds.low}, {"high", m.thresholds.high}};
  doc["fps"] = m.fps;
  json sessions = json::array();
  for (const auto& s : m.sessions) {
    json entry{{"session_id", s.session_id}};
    if (!s.grade.empty()) entry["grade"] = s.grade;
    json emb = json::object();
    for (const auto& [camera, path] : s.embeddings) emb[camera] = path.string();
    json rat = json::object();
    for (const auto& [rater, path] : s.ratings) rat[rater] = path.string();
    entry["embeddings"] = emb;
    entry["ratings"] = rat;
    sessions.push_back(entry);
  }
  doc["sessions"] = sessions;
  return doc;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  auto in = open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, "manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(doc, path.parent_path());
}

std::vector<FrameEmbedding> parse_embedding_table(std::istream& in, const DatasetManifest& manifest) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::parse, "embeddings file is missing its header (row 1)");
  }
  const auto header = csv::split_line(line);
  static constexpr std::array<std::string_view, 5> kFixed = {"session_id", "student_id", "camera_id",
                                                              "frame_index", "modality"};
  if (header.size() < kFixed.size() + 1) {
    throw Error(ErrorKind::parse, "malformed embeddings header at row 1");
  }
  for (std::size_t i = 0; i < kFixed.size(); ++i) {
    if (header[i] != kFixed[i]) {
      throw Error(ErrorKind::parse, "malformed embeddings header at row 1: expected '" + std::string(kFixed[i]) +
                                        "' got '" + std::string(header[i]) + "'");
    }
  }
  // Vector columns d0..d{D-1}; identity columns id_d* (detections files) are skipped here.
  std::size_t vector_columns = 0;
  for (std::size_t i = kFixed.size(); i < header.size(); ++i) {
    const std::string expected = "d" + std::to_string(vector_columns);
    if (header[i] == expected) {
      ++vector_columns;
    } else if (header[i].rfind("id_d", 0) == 0) {
      continue;
    } else {
      throw Error(ErrorKind::parse, "malformed embeddings header at row 1: unexpected column '" +
                                        std::string(header[i]) + "'");
    }
  }

  std::vector<FrameEmbedding> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::parse, "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                        " fields, header declares " + std::to_string(header.size()));
    }
    FrameEmbedding frame;
    frame.session_id = std::string(fields[0]);
    frame.student_id = std::string(fields[1]);
    frame.camera_id = std::string(fields[2]);
    frame.frame_index = csv::parse_int(fields[3], row, "frame_index");
    if (frame.frame_index < 0) {
      throw Error(ErrorKind::parse, "negative frame_index at row " + std::to_string(row));
    }
    try {
      frame.modality = parse_modality(fields[4]);
    } catch (const Error&) {
      throw Error(ErrorKind::parse, "unknown modality '" + std::string(fields[4]) + "' at row " + std::to_string(row));
    }
    const std::size_t dim = manifest.modality_dims.count(frame.modality) ? manifest.dimension(frame.modality) : 0;
    // Trailing empty vector cells encode a shorter vector when modalities differ in D.
    std::size_t used = 0;
    for (std::size_t c = 0; c < vector_columns; ++c) {
      if (!fields[kFixed.size() + c].empty()) used = c + 1;
    }
    if (used != dim) {
      throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": vector length " + std::to_string(used) +
                                        " does not match manifest dimension " + std::to_string(dim) + " for " +
                                        std::string(to_string(frame.modality)));
    }
    frame.vector.reserve(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      frame.vector.push_back(csv::parse_double(fields[kFixed.size() + c], row, "d" + std::to_string(c)));
    }
    rows.push_back(std::move(frame));
  }
  return rows;
}

std::vector<FrameEmbedding> load_embedding_table(const std::filesystem::path& path, const DatasetManifest& manifest) {
  auto in = open_input(path);
  try {
    return parse_embedding_table(in, manifest);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_embedding_table(std::ostream& out, const std::vector<FrameEmbedding>& rows, std::size_t identity_dim,
                           const std::vector<std::vector<double>>* identity_vectors) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.vector.size());
  out << "session_id,student_id,camera_id,frame_index,modality";
  for (std::size_t i = 0; i < width; ++i) out << ",d" << i;
  for (std::size_t i = 0; i < identity_dim; ++i) out << ",id_d" << i;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    out << row.session_id << ',' << row.student_id << ',' << row.camera_id << ',' << row.frame_index << ','
        << to_string(row.modality);
    for (std::size_t i = 0; i < width; ++i) {
      out << ',';
      if (i < row.vector.size()) out << csv::format_double(row.vector[i]);
    }
    for (std::size_t i = 0; i < identity_dim; ++i) {
      out << ',' << csv::format_double((*identity_vectors)[r][i]);
    }
    out << '\n';
  }
}

void parse_ratings(std::istream& in, RatingTable& table) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::parse, "ratings file is missing its header (row 1)");
  const auto header = csv::split_line(line);
  static constexpr std::array<std::string_view, 5> kHeader = {"session_id", "student_id", "rater_id", "second",
                                                              "value"};
  if (header.size() != kHeader.size() || !std::equal(header.begin(), header.end(), kHeader.begin())) {
    throw Error(ErrorKind::parse, "malformed ratings header at row 1");
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split_line(line);
    if (f.size() != kHeader.size()) {
      throw Error(ErrorKind::parse, "row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
    }
    const std::int64_t second = csv::parse_int(f[3], row, "second");
    const double value = csv::parse_double(f[4], row, "value");
    if (value < -2.0 || value > 2.0) {
      throw Error(ErrorKind::parse, "rating outside [-2, 2] at row " + std::to_string(row));
    }
    auto& raters = table[{std::string(f[0]), std::string(f[1])}];
    auto& series = raters[std::string(f[2])];
    series.rater_id = std::string(f[2]);
    if (raters.size() > 2) {
      throw Error(ErrorKind::parse, "more than two raters for session '" + std::string(f[0]) + "', student '" +
                                        std::string(f[1]) + "' at row " + std::to_string(row));
    }
    if (!series.values.emplace(second, value).second) {
      throw Error(ErrorKind::parse, "duplicate rating at row " + std::to_string(row));
    }
  }
}

RatingTable load_ratings(const std::vector<std::filesystem::path>& paths) {
  RatingTable table;
  for (const auto& path : paths) {
    auto in = open_input(path);
    try {
      parse_ratings(in, table);
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ": " + e.what());
    }
  }
  return table;
}

ContinuousEngagementSeries average_raters(const RaterSeries& a, const RaterSeries& b) {
  std::vector<std::int64_t> missing;
  for (const auto& [second, value] : a.values) {
    if (!b.values.count(second)) missing.push_back(second);
  }
  for (const auto& [second, value] : b.values) {
    if (!a.values.count(second)) missing.push_back(second);
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    std::string list;
    for (auto s : missing) list += (list.empty() ? "" : ",") + std::to_string(s);
    throw Error(ErrorKind::alignment, "rater series not aligned; missing seconds: " + list);
  }
  ContinuousEngagementSeries out;
  for (const auto& [second, value] : a.values) {
    out.values.emplace(second, (value + b.values.at(second)) / 2.0);
  }
  return out;
}

double icc_absolute_agreement(const RaterSeries& a, const RaterSeries& b) {
  std::vector<std::array<double, 2>> rows;
  for (const auto& [second, value] : a.values) {
    if (auto it = b.values.find(second); it != b.values.end()) rows.push_back({value, it->second});
  }
  const double n = static_cast<double>(rows.size());
  if (rows.size() < 2) {
    throw Error(ErrorKind::degenerate, "ICC needs at least two shared seconds, got " + std::to_string(rows.size()));
  }
  constexpr double k = 2.0;
  double grand = 0.0;
  for (const auto& r : rows) grand += r[0] + r[1];
  grand /= n * k;

  std::array<double, 2> column_mean{0.0, 0.0};
  for (const auto& r : rows) {
    column_mean[0] += r[0];
    column_mean[1] += r[1];
  }
  column_mean[0] /= n;
  column_mean[1] /= n;

  double ss_rows = 0.0, ss_total = 0.0;
  for (const auto& r : rows) {
    const double row_mean = (r[0] + r[1]) / k;
    ss_rows += k * (row_mean - grand) * (row_mean - grand);
    ss_total += (r[0] - grand) * (r[0] - grand) + (r[1] - grand) * (r[1] - grand);
  }
  double ss_cols = 0.0;
  for (double cm : column_mean) ss_cols += n * (cm - grand) * (cm - grand);
  const double ss_error = std::max(0.0, ss_total - ss_rows - ss_cols);

  if (ss_total <= 0.0) throw Error(ErrorKind::degenerate, "ICC undefined: both raters constant and identical");

  const double ms_rows = ss_rows / (n - 1.0);
  const double ms_cols = ss_cols / (k - 1.0);
  const double ms_error = ss_error / ((n - 1.0) * (k - 1.0));
  const double denominator = ms_rows + (ms_cols - ms_error) / n;
  if (denominator == 0.0) throw Error(ErrorKind::degenerate, "ICC undefined: zero denominator");
  return (ms_rows - ms_error) / denominator;
}

EngagementLevel discretize_engagement(double value, const Thresholds& thresholds) {
  if (!(value >= -2.0 && value <= 2.0)) {
    throw Error(ErrorKind::range, "engagement value " + std::to_string(value) + " outside [-2, 2]");
  }
  if (value <= thresholds.low) return EngagementLevel::low;
  if (value <= thresholds.high) return EngagementLevel::medium;
  return EngagementLevel::high;
}

BuildResult build_labeled_dataset(const DatasetManifest& manifest, std::vector<Sequence> sequences,
                                  const LabelTable& labels) {
  BuildResult result;
  std::set<std::tuple<std::string, std::string, std::int64_t, Modality>> seen;
  for (auto& seq : sequences) {
    const double* rating = nullptr;
    if (auto s = labels.find(seq.student_id); s != labels.end()) {
      if (auto sess = s->second.find(seq.session_id); sess != s->second.end()) {
        if (auto v = sess->second.values.find(seq.second_index); v != sess->second.values.end()) rating = &v->second;
      }
    }
    if (rating == nullptr) {
      ++result.dropped;
      continue;
    }
    if (!seen.emplace(seq.student_id, seq.session_id, seq.second_index, seq.modality).second) {
      throw Error(ErrorKind::validation, "duplicate sequence for student '" + seq.student_id + "', session '" +
                                             seq.session_id + "', second " + std::to_string(seq.second_index));
    }
    if (static_cast<std::size_t>(seq.frames.rows()) != kSequenceLength) {
      throw Error(ErrorKind::shape, "sequence does not have 24 frames");
    }
    LabeledSequence entry;
    entry.rating = *rating;
    entry.level = discretize_engagement(*rating, manifest.thresholds);
    entry.sequence = std::move(seq);
    result.set.entries.push_back(std::move(entry));
  }
  return result;
}

std::vector<Sequence> group_sequences(const std::vector<FrameEmbedding>& frames, int fps) {
  using Key = std::tuple<std::string, std::string, std::int64_t, Modality>;  // session, student, second, modality
  // camera -> frame offset within second -> row
  std::map<Key, std::map<std::string, std::map<std::int64_t, const FrameEmbedding*>>> buckets;
  for (const auto& f : frames) {
    const std::int64_t second = f.frame_index / fps;
    buckets[{f.session_id, f.student_id, second, f.modality}][f.camera_id][f.frame_index - second * fps] = &f;
  }
  std::vector<Sequence> out;
  for (const auto& [key, cameras] : buckets) {
    const std::map<std::int64_t, const FrameEmbedding*>* best = nullptr;
    for (const auto& [camera, offsets] : cameras) {
      if (best == nullptr || offsets.size() > best->size()) best = &offsets;
    }
    // A complete second needs the first kSequenceLength offsets of the block.
    if (best == nullptr || best->size() < kSequenceLength) continue;
    bool complete = true;
    for (std::size_t i = 0; i < kSequenceLength; ++i) {
      if (!best->count(static_cast<std::int64_t>(i))) {
        complete = false;
        break;
      }
    }
    if (!complete) continue;
    const std::size_t dim = best->begin()->second->vector.size();
    Sequence seq;
    std::tie(seq.session_id, seq.student_id, seq.second_index, seq.modality) = key;
    seq.frames.resize(static_cast<Eigen::Index>(kSequenceLength), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < kSequenceLength; ++i) {
      const auto& v = best->at(static_cast<std::int64_t>(i))->vector;
      for (std::size_t d = 0; d < dim; ++d) seq.frames(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::array<double, kLevelCount> level_fractions(const LabeledSequenceSet& set) {
  std::array<double, kLevelCount> counts{0.0, 0.0, 0.0};
  for (const auto& e : set.entries) counts[index_of(e.level)] += 1.0;
  const double total = static_cast<double>(set.entries.size());
  if (total == 0.0) return counts;
  for (double& c : counts) c /= total;
  return counts;
}

IngestResult ingest_manifest(const DatasetManifest& manifest) {
  manifest.validate();
  IngestResult result;
  LabelTable labels;
  std::vector<Sequence> sequences;
  for (const auto& session : manifest.sessions) {
    std::vector<FrameEmbedding> frames;
    for (const auto& [camera, path] : session.embeddings) {
      auto rows = load_embedding_table(path, manifest);
      for (auto& r : rows) {
        if (r.session_id != session.session_id) {
          throw Error(ErrorKind::parse, path.string() + ": row belongs to session '" + r.session_id +
                                            "', manifest lists it under '" + session.session_id + "'");
        }
        if (!session.grade.empty()) result.student_grades[r.student_id] = session.grade;
      }
      frames.insert(frames.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
    }
    auto seqs = group_sequences(frames, manifest.fps);
    sequences.insert(sequences.end(), std::make_move_iterator(seqs.begin()), std::make_move_iterator(seqs.end()));

    std::vector<std::filesystem::path> rating_paths;
    for (const auto& [rater, path] : session.ratings) rating_paths.push_back(path);
    const RatingTable ratings = load_ratings(rating_paths);
    for (const auto& [key, raters] : ratings) {
      const auto& [session_id, student_id] = key;
      if (session_id != session.session_id) continue;
      RaterAgreement agreement{session_id, student_id, std::nullopt, {}};
      if (raters.size() != 2) {
        agreement.note = "expected two raters, found " + std::to_string(raters.size());
        result.agreement.push_back(agreement);
        continue;
      }
      const RaterSeries& a = raters.begin()->second;
      const RaterSeries& b = std::next(raters.begin())->second;
      // Seconds covered by a single rater are excluded, never imputed.
      RaterSeries shared_a{a.rater_id, {}}, shared_b{b.rater_id, {}};
      for (const auto& [second, value] : a.values) {
        if (auto it = b.values.find(second); it != b.values.end()) {
          shared_a.values.emplace(second, value);
          shared_b.values.emplace(second, it->second);
        }
      }
      const std::size_t excluded = a.values.size() + b.values.size() - 2 * shared_a.values.size();
      if (excluded > 0) agreement.note = std::to_string(excluded) + " single-rater seconds excluded";
      try {
        agreement.icc = icc_absolute_agreement(shared_a, shared_b);
      } catch (const Error& e) {
        agreement.note += (agreement.note.empty() ? "" : "; ") + std::string(e.what());
      }
      labels[student_id][session_id] = average_raters(shared_a, shared_b);
      result.agreement.push_back(std::move(agreement));
    }
  }
  auto built = build_labeled_dataset(manifest, std::move(sequences), labels);
  result.set = std::move(built.set);
  result.dropped = built.dropped;
  return result;
}

}  // namespace engage
