#include "engage/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace engage {

using nlohmann::json;

double binary_auroc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorKind::dimension, "auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks for tied groups.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::undefined_metric, "auroc needs both positives and negatives");
  const double p = static_cast<double>(n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

double weighted_auroc(std::span<const LabelDistribution> distributions, std::span<const EngagementLevel> actual) {
  if (distributions.size() != actual.size()) {
    throw Error(ErrorKind::dimension, "weighted_auroc: distributions and labels differ in length");
  }
  const std::size_t n = actual.size();
  std::array<std::size_t, kLevelCount> counts{};
  for (auto level : actual) ++counts[index_of(level)];
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  if (n < 2 || present < 2) {
    throw Error(ErrorKind::undefined_metric, "weighted AUROC needs at least two distinct actual levels");
  }
  std::vector<double> scores(n);
  std::vector<std::uint8_t> flags(n);
  double total = 0.0;
  for (std::size_t l = 0; l < kLevelCount; ++l) {
    if (counts[l] == 0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = distributions[i].p[l];
      flags[i] = index_of(actual[i]) == l ? 1 : 0;
    }
    total += static_cast<double>(counts[l]) * binary_auroc(scores, flags);
  }
  return total / static_cast<double>(n);
}

ConfusionMatrix confusion_matrix(std::span<const EngagementLevel> predicted, std::span<const EngagementLevel> actual) {
  if (predicted.size() != actual.size()) throw Error(ErrorKind::dimension, "confusion: length mismatch");
  if (actual.empty()) throw Error(ErrorKind::validation, "confusion matrix needs at least one sample");
  ConfusionMatrix cm;
  std::array<std::array<std::size_t, kLevelCount>, kLevelCount> counts{};
  for (std::size_t i = 0; i < actual.size(); ++i) ++counts[index_of(actual[i])][index_of(predicted[i])];
  const double n = static_cast<double>(actual.size());
  for (std::size_t r = 0; r < kLevelCount; ++r) {
    std::size_t row_total = 0;
    for (std::size_t c = 0; c < kLevelCount; ++c) row_total += counts[r][c];
    cm.support[r] = row_total;
    cm.priors[r] = static_cast<double>(row_total) / n;
    for (std::size_t c = 0; c < kLevelCount; ++c) {
      cm.rows[r][c] = row_total == 0 ? 0.0 : static_cast<double>(counts[r][c]) / static_cast<double>(row_total);
    }
  }
  return cm;
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::pair<double, double> fold_statistics(std::span<const FoldResult> folds) {
  if (folds.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (const auto& f : folds) sum += f.auroc;
  const double mean = sum / static_cast<double>(folds.size());
  double ss = 0.0;
  for (const auto& f : folds) ss += (f.auroc - mean) * (f.auroc - mean);
  return {mean, std::sqrt(ss / static_cast<double>(folds.size()))};
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fingerprint(const PipelineSpec& spec, const Thresholds& t, const std::string& partition) {
  json doc{{"spec", pipeline_spec_to_json(spec)},
           {"thresholds", {t.low, t.high}},
           {"partition", partition}};
  return hex64(stable_hash(doc.dump()));
}

}  // namespace

EvaluationReport loso_evaluate(std::span<const Sample> samples, const PipelineSpec& spec, const LosoOptions& options) {
  std::set<std::string> students = options.students;
  if (students.empty()) {
    for (const auto& s : samples) students.insert(s.student_id);
  }
  if (students.size() < 2) throw Error(ErrorKind::validation, "LOSO needs at least two students in the partition");

  EvaluationReport report;
  report.spec = spec;
  report.partition = options.partition;
  report.thresholds = options.thresholds;
  report.fingerprint = fingerprint(spec, options.thresholds, options.partition);

  std::vector<Sample> usable;
  for (const auto& s : samples) {
    if (students.count(s.student_id) && s.has(spec.input)) usable.push_back(s);
  }

  std::vector<EngagementLevel> pooled_pred, pooled_actual;
  for (const auto& student : students) {  // std::set iterates in sorted order
    std::vector<Sample> train, test;
    for (const auto& s : usable) (s.student_id == student ? test : train).push_back(s);
    if (test.empty()) {
      report.warnings.push_back("student " + student + " has no labeled sequences; fold skipped");
      continue;
    }
    std::set<EngagementLevel> test_levels;
    for (const auto& s : test) test_levels.insert(s.level);
    if (test_levels.size() < 2) {
      report.warnings.push_back("student " + student + " has a single level; AUROC undefined, fold skipped");
      continue;
    }

    FoldResult fold;
    fold.student_id = student;
    fold.samples = test.size();
    std::set<std::uint64_t> hashes;
    for (const auto& s : train) hashes.insert(stable_hash(s.student_id));
    fold.training_student_hashes.assign(hashes.begin(), hashes.end());
    if (hashes.count(stable_hash(student))) {
      throw Error(ErrorKind::validation, "LOSO leakage: test student " + student + " appears in its training fold");
    }

    const EngagementModel model = fit_engagement_model(spec, train);
    std::vector<LabelDistribution> dists;
    std::vector<EngagementLevel> predicted, actual;
    for (const auto& s : test) {
      const auto prediction = predict_sample(model, s);
      dists.push_back(prediction.aggregate);
      predicted.push_back(prediction.level);
      actual.push_back(s.level);
    }
    fold.auroc = weighted_auroc(dists, actual);
    fold.confusion = confusion_matrix(predicted, actual);
    pooled_pred.insert(pooled_pred.end(), predicted.begin(), predicted.end());
    pooled_actual.insert(pooled_actual.end(), actual.begin(), actual.end());
    report.folds.push_back(std::move(fold));
  }
  std::tie(report.mean_auroc, report.std_auroc) = fold_statistics(report.folds);
  if (!pooled_actual.empty()) report.pooled = confusion_matrix(pooled_pred, pooled_actual);
  return report;
}

EvaluationReport loso_evaluate(const LabeledSequenceSet& dataset, const PipelineSpec& spec, const LosoOptions& options) {
  const auto samples = assemble_samples(dataset);
  return loso_evaluate(samples, spec, options);
}

std::vector<EvaluationReport> evaluate_by_grade(std::span<const Sample> samples, const PipelineSpec& spec,
                                                const std::map<std::string, std::string>& student_grades,
                                                const Thresholds& thresholds) {
  std::map<std::string, std::set<std::string>> partitions;
  for (const auto& s : samples) {
    auto it = student_grades.find(s.student_id);
    partitions[it == student_grades.end() || it->second.empty() ? std::string("all") : it->second].insert(s.student_id);
  }
  std::vector<EvaluationReport> reports;
  for (const auto& [grade, students] : partitions) {
    LosoOptions options;
    options.students = students;
    options.partition = grade;
    options.thresholds = thresholds;
    reports.push_back(loso_evaluate(samples, spec, options));
  }
  return reports;
}

json confusion_to_json(const ConfusionMatrix& c) {
  json rows = json::array();
  for (const auto& r : c.rows) rows.push_back(r);
  return {{"rows", rows}, {"priors", c.priors}, {"support", c.support}};
}

namespace {

ConfusionMatrix confusion_from_json(const json& doc) {
  ConfusionMatrix c;
  for (std::size_t r = 0; r < kLevelCount; ++r) {
    for (std::size_t k = 0; k < kLevelCount; ++k) c.rows[r][k] = doc.at("rows").at(r).at(k).get<double>();
    c.priors[r] = doc.at("priors").at(r).get<double>();
    c.support[r] = doc.at("support").at(r).get<std::size_t>();
  }
  return c;
}

}  // namespace

json report_to_json(const EvaluationReport& report) {
  json folds = json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"student_id", f.student_id},
                     {"auroc", f.auroc},
                     {"samples", f.samples},
                     {"confusion", confusion_to_json(f.confusion)},
                     {"training_student_hashes", f.training_student_hashes}});
  }
  return {{"format", "engage.report/1"},
          {"spec", pipeline_spec_to_json(report.spec)},
          {"partition", report.partition},
          {"thresholds", {{"low", report.thresholds.low}, {"high", report.thresholds.high}}},
          {"folds", folds},
          {"mean_auroc", report.mean_auroc},
          {"std_auroc", report.std_auroc},
          {"pooled_confusion", confusion_to_json(report.pooled)},
          {"fingerprint", report.fingerprint},
          {"warnings", report.warnings}};
}

EvaluationReport report_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string()) != "engage.report/1") {
      throw Error(ErrorKind::parse, "not an engage evaluation report");
    }
    EvaluationReport r;
    r.spec = pipeline_spec_from_json(doc.at("spec"));
    r.partition = doc.at("partition").get<std::string>();
    r.thresholds.low = doc.at("thresholds").at("low").get<double>();
    r.thresholds.high = doc.at("thresholds").at("high").get<double>();
    for (const auto& f : doc.at("folds")) {
      FoldResult fold;
      fold.student_id = f.at("student_id").get<std::string>();
      fold.auroc = f.at("auroc").get<double>();
      fold.samples = f.at("samples").get<std::size_t>();
      fold.confusion = confusion_from_json(f.at("confusion"));
      fold.training_student_hashes = f.at("training_student_hashes").get<std::vector<std::uint64_t>>();
      r.folds.push_back(std::move(fold));
    }
    r.mean_auroc = doc.at("mean_auroc").get<double>();
    r.std_auroc = doc.at("std_auroc").get<double>();
    r.pooled = confusion_from_json(doc.at("pooled_confusion"));
    r.fingerprint = doc.at("fingerprint").get<std::string>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed evaluation report: ") + e.what());
  }
}

namespace {

std::string family_label(Family f) {
  switch (f) {
    case Family::svm_linear: return "SVM (linear)";
    case Family::svm_rbf: return "SVM (rbf)";
    case Family::random_forest: return "Random Forest";
    case Family::mlp: return "MLP";
    case Family::lstm: return "LSTM";
  }
  return "?";
}

std::string pad(std::string s, std::size_t width) {
  // Width counts code points so the ± sign does not skew columns.
  std::size_t visible = 0;
  for (unsigned char c : s) visible += (c & 0xC0) != 0x80;
  if (visible < width) s.append(width - visible, ' ');
  return s;
}

}  // namespace

std::string format_report_table(std::span<const EvaluationReport> reports) {
  std::vector<std::string> partitions;
  std::vector<InputSelection> inputs;
  std::vector<Family> families;
  std::map<std::tuple<std::string, Family, InputSelection>, const EvaluationReport*> cells;
  for (const auto& r : reports) {
    if (std::find(partitions.begin(), partitions.end(), r.partition) == partitions.end()) {
      partitions.push_back(r.partition);
    }
    if (std::find(inputs.begin(), inputs.end(), r.spec.input) == inputs.end()) inputs.push_back(r.spec.input);
    if (std::find(families.begin(), families.end(), r.spec.classifier.family) == families.end()) {
      families.push_back(r.spec.classifier.family);
    }
    cells[{r.partition, r.spec.classifier.family, r.spec.input}] = &r;
  }
  std::sort(inputs.begin(), inputs.end());
  std::sort(families.begin(), families.end());

  constexpr std::size_t kFirst = 16, kCell = 18;
  std::ostringstream out;
  for (const auto& partition : partitions) {
    out << "Partition: " << partition << '\n';
    out << pad("Classifier", kFirst);
    for (auto in : inputs) out << pad(std::string(to_string(in)), kCell);
    out << '\n';
    for (auto family : families) {
      out << pad(family_label(family), kFirst);
      for (auto in : inputs) {
        auto it = cells.find({partition, family, in});
        if (it == cells.end()) {
          out << pad("-", kCell);
          continue;
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f ± %.3f", it->second->mean_auroc, it->second->std_auroc);
        out << pad(buf, kCell);
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string format_confusion(const ConfusionMatrix& c) {
  std::ostringstream out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-10s%8s%8s%8s%8s\n", "actual", "low", "medium", "high", "prior");
  out << buf;
  for (std::size_t r = 0; r < kLevelCount; ++r) {
    std::snprintf(buf, sizeof buf, "%-10s%8.3f%8.3f%8.3f%8.3f\n",
                  std::string(to_string(level_from_index(r))).c_str(), c.rows[r][0], c.rows[r][1], c.rows[r][2],
                  c.priors[r]);
    out << buf;
  }
  return out.str();
}

}  // namespace engage
