// engage command-line front end.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "engage/config.hpp"
#include "engage/evaluation.hpp"
#include "engage/http_service.hpp"
#include "engage/ingest.hpp"
#include "engage/personalization.hpp"
#include "engage/pipeline.hpp"
#include "engage/synthetic.hpp"
#include "engage/tracklets.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace engage;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitData = 3;

std::atomic<bool> g_stop{false};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::range:
    case ErrorKind::dimension:
    case ErrorKind::shape:
    case ErrorKind::unsupported:
      return kExitValidation;
    default:
      return kExitData;
  }
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string manifest_path;
};

EngageConfig resolve_config(const Globals& g) {
  EngageConfig config = g.config_path.empty() ? EngageConfig{} : load_config(g.config_path);
  if (!g.manifest_path.empty()) config.manifest = load_manifest(g.manifest_path);
  if (g.seed) config.override_seed(*g.seed);
  return config;
}

const DatasetManifest& require_manifest(const EngageConfig& config) {
  if (!config.manifest) throw Error(ErrorKind::validation, "no manifest: pass --manifest or set it in --config");
  return *config.manifest;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::validation, "cannot write " + path.string());
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::validation, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void apply_overrides(EngageConfig& config, const std::string& family, const std::string& input) {
  if (!family.empty()) {
    const auto seed = config.pipeline.classifier.seed;
    config.pipeline.classifier = ClassifierSpec::defaults(parse_family(family), seed);
  }
  if (!input.empty()) config.pipeline.input = parse_input_selection(input);
}

struct Dataset {
  std::vector<Sample> samples;
  std::map<std::string, std::string> grades;
};

Dataset load_dataset(const EngageConfig& config, bool verbose) {
  const auto result = ingest_manifest(require_manifest(config));
  if (verbose) {
    for (const auto& a : result.agreement) {
      if (!a.note.empty()) std::cerr << "note: " << a.session_id << '/' << a.student_id << ": " << a.note << '\n';
    }
    if (result.dropped > 0) std::cerr << "note: " << result.dropped << " sequences had no label and were dropped\n";
  }
  return {assemble_samples(result.set), result.student_grades};
}

int cmd_ingest(const Globals& g, const std::string& labels_out) {
  const auto config = resolve_config(g);
  const auto result = ingest_manifest(require_manifest(config));
  const auto fractions = level_fractions(result.set);
  const auto samples = assemble_samples(result.set);
  std::set<std::string> students;
  for (const auto& s : samples) students.insert(s.student_id);
  std::printf("sequences %zu  seconds %zu  students %zu  dropped %zu\n", result.set.entries.size(), samples.size(),
              students.size(), result.dropped);
  std::printf("levels    low %.3f  medium %.3f  high %.3f\n", fractions[0], fractions[1], fractions[2]);
  for (const auto& a : result.agreement) {
    std::printf("icc       %s/%s  %s%s%s\n", a.session_id.c_str(), a.student_id.c_str(),
                a.icc ? std::to_string(*a.icc).c_str() : "n/a", a.note.empty() ? "" : "  ", a.note.c_str());
  }
  if (!labels_out.empty()) {
    auto out = open_out(labels_out);
    out << "student_id,session_id,second,rating,level\n";
    for (const auto& s : samples) {
      out << s.student_id << ',' << s.session_id << ',' << s.second << ',' << s.rating << ',' << to_string(s.level)
          << '\n';
    }
  }
  return 0;
}

int cmd_tracklets(const Globals& g, const std::vector<std::string>& detection_files, const std::string& gallery_path,
                  double threshold, const std::string& out_path) {
  const auto config = resolve_config(g);
  const auto& manifest = require_manifest(config);
  const fs::path gallery_file = gallery_path.empty() ? manifest.gallery : fs::path(gallery_path);
  if (gallery_file.empty()) throw Error(ErrorKind::validation, "no gallery: pass --gallery or set it in the manifest");
  const auto gallery = load_gallery(gallery_file);

  std::map<std::string, std::vector<Detection>> by_session;
  for (const auto& file : detection_files) {
    for (auto& d : load_detections(file, manifest)) by_session[d.session_id].push_back(std::move(d));
  }
  std::vector<FrameEmbedding> rows;
  std::size_t tracklet_count = 0, sequence_count = 0;
  for (const auto& [session, detections] : by_session) {
    const auto tracklets = build_tracklets(detections, gallery, threshold);
    tracklet_count += tracklets.size();
    const auto sequences = assemble_sequences(tracklets, session, manifest.fps);
    sequence_count += sequences.size();
    auto frames = sequences_to_frames(sequences, "selected", manifest.fps);
    rows.insert(rows.end(), std::make_move_iterator(frames.begin()), std::make_move_iterator(frames.end()));
  }
  auto out = open_out(out_path);
  write_embedding_table(out, rows);
  std::printf("sessions %zu  tracklets %zu  sequences %zu -> %s\n", by_session.size(), tracklet_count, sequence_count,
              out_path.c_str());
  return 0;
}

int cmd_train(const Globals& g, const std::string& family, const std::string& input, const std::string& out_path) {
  auto config = resolve_config(g);
  apply_overrides(config, family, input);
  const auto data = load_dataset(config, true);
  const auto usable = filter_samples(data.samples, config.pipeline.input);
  const auto model = fit_engagement_model(config.pipeline, usable);
  auto out = open_out(out_path);
  out << engagement_model_to_json(model).dump() << '\n';
  std::printf("trained %s on %s with %zu samples -> %s\n", std::string(to_string(config.pipeline.classifier.family)).c_str(),
              std::string(to_string(config.pipeline.input)).c_str(), usable.size(), out_path.c_str());
  return 0;
}

int cmd_evaluate(const Globals& g, const std::vector<std::string>& families, const std::vector<std::string>& inputs,
                 bool by_grade, const std::string& out_path) {
  auto config = resolve_config(g);
  const auto data = load_dataset(config, true);
  std::vector<std::string> fam = families, in = inputs;
  if (fam.empty()) fam.push_back(std::string(to_string(config.pipeline.classifier.family)));
  if (in.empty()) in.push_back(std::string(to_string(config.pipeline.input)));

  std::vector<EvaluationReport> reports;
  for (const auto& f : fam) {
    for (const auto& i : in) {
      EngageConfig run = config;
      apply_overrides(run, f == std::string(to_string(config.pipeline.classifier.family)) ? "" : f, i);
      if (run.pipeline.classifier.family == Family::lstm && run.pipeline.input == InputSelection::feature_fusion) {
        std::cerr << "note: LSTM supports score fusion only; skipping feature fusion\n";
        continue;
      }
      if (by_grade) {
        auto r = evaluate_by_grade(data.samples, run.pipeline, data.grades, require_manifest(run).thresholds);
        reports.insert(reports.end(), r.begin(), r.end());
      } else {
        LosoOptions options;
        options.thresholds = require_manifest(run).thresholds;
        reports.push_back(loso_evaluate(data.samples, run.pipeline, options));
      }
    }
  }
  for (const auto& r : reports) {
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  }
  std::cout << format_report_table(reports);
  if (!out_path.empty()) {
    json doc = json::array();
    for (const auto& r : reports) doc.push_back(report_to_json(r));
    auto out = open_out(out_path);
    out << doc.dump(2) << '\n';
  }
  return 0;
}

int cmd_fuse(const Globals& g, const std::string& model_path, const std::string& student, const std::string& out_path) {
  const auto config = resolve_config(g);
  const auto model = engagement_model_from_json(read_json(model_path));
  const auto data = load_dataset(config, false);
  std::vector<PredictionRow> rows;
  for (const auto& s : data.samples) {
    if (!student.empty() && s.student_id != student) continue;
    if (!s.has(model.spec.input)) continue;
    const auto p = predict_sample(model, s);
    rows.push_back(PredictionRow{s.student_id, s.session_id, s.second, p.level, p.aggregate});
  }
  if (rows.empty()) throw Error(ErrorKind::no_data, "no samples matched the model input");
  if (out_path.empty() || out_path == "-") {
    write_predictions_csv(std::cout, rows);
  } else {
    auto out = open_out(out_path);
    write_predictions_csv(out, rows);
    std::printf("%zu predictions -> %s\n", rows.size(), out_path.c_str());
  }
  return 0;
}

int cmd_personalize_simulated(const Globals& g, const std::string& student, const std::string& strategy,
                              const std::string& out_dir) {
  auto config = resolve_config(g);
  if (!student.empty()) config.personalization.student_id = student;
  if (!strategy.empty()) config.personalization.strategy = parse_selection_strategy(strategy);
  const auto data = load_dataset(config, true);

  std::vector<std::string> targets;
  if (!config.personalization.student_id.empty()) {
    targets.push_back(config.personalization.student_id);
  } else {
    std::set<std::string> all;
    for (const auto& s : data.samples) all.insert(s.student_id);
    targets.assign(all.begin(), all.end());
  }
  double gain_sum = 0.0;
  for (const auto& t : targets) {
    SimulationConfig sim;
    sim.spec = config.pipeline;
    sim.student_id = t;
    sim.pool_fraction = config.personalization.pool_fraction;
    sim.episodes = config.personalization.episodes;
    sim.batch = config.personalization.batch;
    sim.strategy = config.personalization.strategy;
    sim.seed = config.seed;
    const auto result = simulate_personalization(data.samples, sim);
    std::printf("%s", t.c_str());
    for (double v : result.curve) std::printf(" %.4f", v);
    std::printf("  gain %+.4f\n", result.curve.back() - result.curve.front());
    gain_sum += result.curve.back() - result.curve.front();
    if (!out_dir.empty()) {
      auto out = open_out(fs::path(out_dir) / ("curve_" + t + ".csv"));
      write_curve_csv(out, result.curve, result.labels_used);
    }
  }
  std::printf("mean gain %+.4f over %zu students (%s sampling)\n", gain_sum / static_cast<double>(targets.size()),
              targets.size(), std::string(to_string(config.personalization.strategy)).c_str());
  return 0;
}

int cmd_personalize_serve(const Globals& g, const std::string& host, int port) {
  auto config = resolve_config(g);
  if (!host.empty()) config.service.host = host;
  if (port >= 0) config.service.port = port;
  const auto data = load_dataset(config, true);
  const auto usable = filter_samples(data.samples, config.pipeline.input);

  SessionManager::Options options;
  options.seed = config.seed;
  options.pool_fraction = config.personalization.pool_fraction;
  options.state_dir = config.service.state_dir;
  SessionManager manager(options);
  manager.register_model("base", config.pipeline, usable);
  std::map<std::string, std::vector<Sample>> personal;
  for (const auto& s : usable) personal[s.student_id].push_back(s);
  for (const auto& [student, samples] : personal) manager.register_student(student, samples);

  HttpService service(manager);
  const int bound = service.start(config.service.host, config.service.port);
  std::printf("serving model 'base' for %zu students on http://%s:%d\n", personal.size(), config.service.host.c_str(),
              bound);
  std::fflush(stdout);
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs) {
  std::vector<EvaluationReport> reports;
  for (const auto& path : inputs) {
    const json doc = read_json(path);
    if (doc.is_array()) {
      for (const auto& r : doc) reports.push_back(report_from_json(r));
    } else {
      reports.push_back(report_from_json(doc));
    }
  }
  std::cout << format_report_table(reports);
  for (const auto& r : reports) {
    std::cout << '\n'
              << to_string(r.spec.classifier.family) << " / " << to_string(r.spec.input) << " / " << r.partition
              << "  (fingerprint " << r.fingerprint << ")\n";
    for (const auto& f : r.folds) std::printf("  %-12s auroc %.4f  n=%zu\n", f.student_id.c_str(), f.auroc, f.samples);
    std::cout << format_confusion(r.pooled);
  }
  return 0;
}

int cmd_synth(const Globals& g, SyntheticConfig synth, const std::string& out_dir) {
  if (g.seed) synth.seed = *g.seed;
  const auto ds = generate_synthetic_dataset(synth);
  const auto manifest = write_synthetic_dataset(ds, out_dir);
  std::printf("%zu students x %zu s -> %s\n", synth.students, synth.seconds, manifest.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-second engagement classification and personalization"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every stochastic step");
  app.add_option("--manifest", g.manifest_path, "Dataset manifest (overrides the config)")->check(CLI::ExistingFile);

  std::string labels_out;
  auto* ingest = app.add_subcommand("ingest", "Validate a manifest and summarize labels and rater agreement");
  ingest->add_option("--labels-out", labels_out, "Write per-second labels as CSV");

  std::vector<std::string> detection_files;
  std::string gallery_path, tracklets_out;
  double threshold = kDefaultIdentityThreshold;
  auto* tracklets = app.add_subcommand("tracklets", "Assign detections to students and write selected sequences");
  tracklets->add_option("--detections", detection_files, "Detections CSV files")->required()->check(CLI::ExistingFile);
  tracklets->add_option("--gallery", gallery_path, "Gallery JSON (defaults to the manifest's)");
  tracklets->add_option("--threshold", threshold, "Minimum cosine similarity for a match");
  tracklets->add_option("--out", tracklets_out, "Output embeddings CSV")->required();

  std::string family, input, model_out;
  auto* train = app.add_subcommand("train", "Fit a model on the whole dataset");
  train->add_option("--family", family, "svm_linear | svm_rbf | random_forest | mlp | lstm");
  train->add_option("--input", input, "attention | affect | feature_fusion | score_fusion");
  train->add_option("--out", model_out, "Model JSON")->required();

  std::vector<std::string> families, inputs;
  std::string report_out;
  bool by_grade = false;
  auto* evaluate = app.add_subcommand("evaluate", "Leave-one-subject-out evaluation");
  evaluate->add_option("--family", families, "One or more classifier families");
  evaluate->add_option("--input", inputs, "One or more input selections");
  evaluate->add_flag("--by-grade", by_grade, "Evaluate each grade partition separately");
  evaluate->add_option("--out", report_out, "Report JSON");

  std::string model_path, fuse_student, predictions_out;
  auto* fuse = app.add_subcommand("fuse", "Predict per-second levels with a trained model");
  fuse->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
  fuse->add_option("--student", fuse_student, "Restrict to one student");
  fuse->add_option("--out", predictions_out, "Predictions CSV ('-' for stdout)");

  bool simulated = false, serve = false;
  std::string p_student, p_strategy, curve_dir, host;
  int port = -1;
  auto* personalize = app.add_subcommand("personalize", "Active-learning personalization");
  auto* sim_flag = personalize->add_flag("--simulated", simulated, "Stored labels act as the oracle");
  auto* serve_flag = personalize->add_flag("--serve", serve, "Serve sessions over HTTP for a human oracle");
  sim_flag->excludes(serve_flag);
  personalize->add_option("--student", p_student, "Student to personalize (simulation)");
  personalize->add_option("--strategy", p_strategy, "margin | random");
  personalize->add_option("--out", curve_dir, "Directory for AUROC curve CSVs");
  personalize->add_option("--host", host, "Bind address (serve)");
  personalize->add_option("--port", port, "Port, 0 picks a free one (serve)");

  std::vector<std::string> report_inputs;
  auto* report = app.add_subcommand("report", "Render evaluation report JSON as tables");
  report->add_option("inputs", report_inputs, "Report JSON files")->required()->check(CLI::ExistingFile);

  SyntheticConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus with manifest");
  synth_cmd->add_option("--students", synth.students, "Number of students")->capture_default_str();
  synth_cmd->add_option("--seconds", synth.seconds, "Seconds per student")->capture_default_str();
  synth_cmd->add_option("--separation", synth.separation, "Distance between level centers")->capture_default_str();
  synth_cmd->add_option("--shift", synth.subject_shift, "Per-student center offset")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "RMS frame noise")->capture_default_str();
  synth_cmd->add_option("--dimension", synth.dimension, "Embedding size per modality")->capture_default_str();
  synth_cmd->add_option("--grades", synth.grades, "Number of grade partitions")->capture_default_str();
  synth_cmd->add_option("--cameras", synth.cameras, "Cameras per session for detection streams (0 skips)")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*ingest) return cmd_ingest(g, labels_out);
    if (*tracklets) return cmd_tracklets(g, detection_files, gallery_path, threshold, tracklets_out);
    if (*train) return cmd_train(g, family, input, model_out);
    if (*evaluate) return cmd_evaluate(g, families, inputs, by_grade, report_out);
    if (*fuse) return cmd_fuse(g, model_path, fuse_student, predictions_out);
    if (*personalize) {
      if (simulated) return cmd_personalize_simulated(g, p_student, p_strategy, curve_dir);
      if (serve) return cmd_personalize_serve(g, host, port);
      std::cerr << "error: personalize needs --simulated or --serve\n";
      return kExitValidation;
    }
    if (*report) return cmd_report(report_inputs);
    if (*synth_cmd) return cmd_synth(g, synth, synth_out);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const ApiError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
