#include "engage/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "engage/csv.hpp"

namespace engage {

namespace {

std::string numbered(const char* prefix, std::size_t i, std::size_t count) {
  std::string n = std::to_string(i);
  const std::size_t width = std::to_string(count).size();
  if (n.size() < width) n.insert(0, width - n.size(), '0');
  return prefix + n;
}

Vector gaussian_vector(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = n(rng);
  return v;
}

Vector random_direction(std::mt19937_64& rng, std::size_t d) {
  Vector v = gaussian_vector(rng, d);
  while (v.norm() == 0.0) v = gaussian_vector(rng, d);
  return v / v.norm();
}

/// Three centers at equal pairwise distance `separation`.
std::vector<Vector> level_centers(std::mt19937_64& rng, std::size_t d, double separation) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(d), 3);
  for (int c = 0; c < 3; ++c) g.col(c) = gaussian_vector(rng, d);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                            Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), 3);
  std::vector<Vector> centers;
  for (int c = 0; c < 3; ++c) centers.push_back(q.col(c) * (separation / std::sqrt(2.0)));
  return centers;
}

double rating_in_band(std::mt19937_64& rng, EngagementLevel level, const Thresholds& t) {
  constexpr double kMargin = 0.01, kEdge = 0.005;
  double lo = -2.0 + kEdge, hi = t.low - kMargin;
  if (level == EngagementLevel::medium) {
    lo = t.low + kMargin;
    hi = t.high - kMargin;
  } else if (level == EngagementLevel::high) {
    lo = t.high + kMargin;
    hi = 2.0 - kEdge;
  }
  if (hi < lo) hi = lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void SyntheticConfig::validate() const {
  if (students < 2) throw Error(ErrorKind::validation, "synthetic dataset needs at least two students");
  if (seconds < 1) throw Error(ErrorKind::validation, "synthetic dataset needs at least one second per student");
  if (dimension < 3) throw Error(ErrorKind::validation, "synthetic dimension must be at least 3");
  if (separation < 0.0 || subject_shift < 0.0 || noise < 0.0) {
    throw Error(ErrorKind::validation, "separation, shift and noise must be non-negative");
  }
  if (second_share < 0.0 || second_share > 1.0) throw Error(ErrorKind::validation, "second_share must lie in [0, 1]");
  if (stay_probability < 0.0 || stay_probability > 1.0) {
    throw Error(ErrorKind::validation, "stay_probability must lie in [0, 1]");
  }
  if (students_per_session < 1 || grades < 1) {
    throw Error(ErrorKind::validation, "students_per_session and grades must be positive");
  }
  if (cameras > 0 && identity_dim < 2) throw Error(ErrorKind::validation, "identity_dim must be at least 2");
  if (!(thresholds.low < thresholds.high)) throw Error(ErrorKind::validation, "thresholds must be ordered");
}

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& config) {
  config.validate();
  SyntheticDataset ds;
  ds.config = config;
  const std::size_t d = config.dimension;
  const std::array<Modality, 2> modalities = {Modality::attention, Modality::affect};

  std::mt19937_64 world(mix_seed(config.seed, 0));
  std::map<Modality, std::vector<Vector>> centers;
  for (auto m : modalities) centers[m] = level_centers(world, d, config.separation);

  // noise is the RMS length of a frame's noise vector, like separation and shift.
  const double coord_sd = config.noise / std::sqrt(static_cast<double>(d));
  const double second_sd = coord_sd * std::sqrt(config.second_share);
  const double frame_sd = coord_sd * std::sqrt(1.0 - config.second_share);
  const std::size_t sessions = (config.students + config.students_per_session - 1) / config.students_per_session;

  for (std::size_t s = 0; s < config.students; ++s) {
    std::mt19937_64 rng(mix_seed(config.seed, 1000 + s));
    const std::string student = numbered("s", s + 1, config.students);
    const std::size_t session_index = s / config.students_per_session;
    const std::string session = numbered("sess", session_index + 1, sessions);
    ds.student_sessions[student] = session;
    ds.student_grades[student] = "g" + std::to_string(session_index % config.grades + 1);

    // Each of the student's level centers moves by its own offset.
    std::map<Modality, std::vector<Vector>> offset;
    for (auto m : modalities) {
      for (int l = 0; l < 3; ++l) offset[m].push_back(random_direction(rng, d) * config.subject_shift);
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    int level = pick(rng);
    auto& raters = ds.ratings[{session, student}];
    raters["r1"].rater_id = "r1";
    raters["r2"].rater_id = "r2";

    for (std::size_t t = 0; t < config.seconds; ++t) {
      if (t > 0 && unit(rng) >= config.stay_probability) level = (level + 1 + pick(rng) % 2) % 3;
      const auto lvl = level_from_index(static_cast<std::size_t>(level));
      const double rating = rating_in_band(rng, lvl, config.thresholds);
      const double delta = 0.004 * unit(rng);
      raters["r1"].values[static_cast<std::int64_t>(t)] = rating + delta;
      raters["r2"].values[static_cast<std::int64_t>(t)] = rating - delta;

      for (auto m : modalities) {
        const Vector base = centers[m][static_cast<std::size_t>(level)] + offset[m][static_cast<std::size_t>(level)] +
                           second_sd * gaussian_vector(rng, d);
        Matrix frames(static_cast<Eigen::Index>(kSequenceLength), static_cast<Eigen::Index>(d));
        for (Eigen::Index f = 0; f < frames.rows(); ++f) {
          for (Eigen::Index k = 0; k < frames.cols(); ++k) frames(f, k) = base[k] + frame_sd * normal(rng);
        }
        ds.set.entries.push_back(LabeledSequence{
            Sequence{student, session, static_cast<std::int64_t>(t), m, std::move(frames)}, lvl, rating});
      }
    }

    if (config.cameras > 0) {
      const Vector identity = random_direction(rng, config.identity_dim);
      GalleryEntry entry{student, {}};
      for (int q = 0; q < 2; ++q) {
        Vector v = identity + 0.05 * gaussian_vector(rng, config.identity_dim);
        entry.query_vectors.emplace_back(v.data(), v.data() + v.size());
      }
      ds.gallery.push_back(std::move(entry));
      // Camera 1 sees every frame; further cameras drop about a third.
      const auto first = ds.set.entries.end() - static_cast<std::ptrdiff_t>(config.seconds * modalities.size());
      for (std::size_t c = 0; c < config.cameras; ++c) {
        const std::string camera = numbered("cam", c + 1, config.cameras);
        for (std::size_t t = 0; t < config.seconds; ++t) {
          const auto& att = (first + static_cast<std::ptrdiff_t>(2 * t))->sequence.frames;
          const auto& aff = (first + static_cast<std::ptrdiff_t>(2 * t + 1))->sequence.frames;
          for (Eigen::Index f = 0; f < att.rows(); ++f) {
            if (c > 0 && unit(rng) < 0.34) continue;
            Vector id = identity + 0.05 * gaussian_vector(rng, config.identity_dim);
            Detection det;
            det.session_id = session;
            det.camera_id = camera;
            det.frame_index = static_cast<std::int64_t>(t * kSequenceLength) + f;
            det.identity.assign(id.data(), id.data() + id.size());
            const auto a = row_span(att, f), b = row_span(aff, f);
            det.modalities[Modality::attention].assign(a.begin(), a.end());
            det.modalities[Modality::affect].assign(b.begin(), b.end());
            ds.detections.push_back(std::move(det));
          }
        }
      }
    }
  }
  return ds;
}

std::filesystem::path write_synthetic_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::parse, "cannot write " + p.string());
    return out;
  };

  DatasetManifest manifest;
  manifest.modality_dims = {{Modality::attention, ds.config.dimension}, {Modality::affect, ds.config.dimension}};
  manifest.thresholds = ds.config.thresholds;
  if (ds.config.cameras > 0) manifest.identity_dim = ds.config.identity_dim;

  std::map<std::string, std::vector<Sequence>> by_session;
  for (const auto& e : ds.set.entries) by_session[e.sequence.session_id].push_back(e.sequence);
  for (const auto& [session, sequences] : by_session) {
    SessionFiles files;
    files.session_id = session;
    for (const auto& [student, s] : ds.student_sessions) {
      if (s == session) files.grade = ds.student_grades.at(student);
    }
    const std::string emb_name = "embeddings_" + session + ".csv";
    {
      auto out = open(dir / emb_name);
      write_embedding_table(out, sequences_to_frames(sequences, "cam1"));
    }
    files.embeddings["cam1"] = emb_name;
    for (const char* rater : {"r1", "r2"}) {
      const std::string name = "ratings_" + session + "_" + rater + ".csv";
      auto out = open(dir / name);
      out << "session_id,student_id,rater_id,second,value\n";
      for (const auto& [key, raters] : ds.ratings) {
        if (key.first != session) continue;
        for (const auto& [second, value] : raters.at(rater).values) {
          out << key.first << ',' << key.second << ',' << rater << ',' << second << ',' << csv::format_double(value)
              << '\n';
        }
      }
      files.ratings[rater] = name;
    }
    if (!ds.detections.empty()) {
      std::vector<Detection> dets;
      for (const auto& det : ds.detections) {
        if (det.session_id == session) dets.push_back(det);
      }
      auto out = open(dir / ("detections_" + session + ".csv"));
      write_detections(out, dets);
    }
    manifest.sessions.push_back(std::move(files));
  }
  if (!ds.gallery.empty()) {
    auto out = open(dir / "gallery.json");
    out << gallery_to_json(ds.gallery).dump(2) << '\n';
    manifest.gallery = "gallery.json";
  }
  const fs::path manifest_path = dir / "manifest.json";
  auto out = open(manifest_path);
  out << manifest_to_json(manifest).dump(2) << '\n';
  return manifest_path;
}

}  // namespace engage
