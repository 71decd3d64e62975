#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/ingest.hpp"
#include "engage/pipeline.hpp"

namespace engage {

/// Mann-Whitney AUC of `scores` for the positive class (nonzero flag); ties count 0.5.
/// Throws undefined_metric when either class is empty.
double binary_auroc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Prevalence-weighted one-vs-rest AUROC over the levels present in `actual`.
double weighted_auroc(std::span<const LabelDistribution> distributions, std::span<const EngagementLevel> actual);

struct ConfusionMatrix {
  std::array<std::array<double, kLevelCount>, kLevelCount> rows{};  // [actual][predicted], row-normalized
  std::array<double, kLevelCount> priors{};
  std::array<std::size_t, kLevelCount> support{};  // samples per actual level
};

ConfusionMatrix confusion_matrix(std::span<const EngagementLevel> predicted, std::span<const EngagementLevel> actual);

/// Stable 64-bit FNV-1a hash (used for the fold leakage guard and fingerprints).
std::uint64_t stable_hash(std::string_view text);

struct FoldResult {
  std::string student_id;
  double auroc = 0.0;
  ConfusionMatrix confusion;
  std::size_t samples = 0;
  std::vector<std::uint64_t> training_student_hashes;  // sorted
};

struct EvaluationReport {
  PipelineSpec spec;
  std::string partition;  // grade name, or "all"
  Thresholds thresholds;
  std::vector<FoldResult> folds;  // sorted by student_id
  double mean_auroc = 0.0;
  double std_auroc = 0.0;  // population std over folds
  ConfusionMatrix pooled;  // over all held-out predictions
  std::string fingerprint;
  std::vector<std::string> warnings;
};

struct LosoOptions {
  /// Students forming the partition; empty means every student in the samples.
  std::set<std::string> students;
  std::string partition = "all";
  Thresholds thresholds;
};

/// Leave-one-subject-out over the partition. Every fit sees only the training
/// fold; folds whose test student has no samples or a single level are skipped
/// with a warning.
EvaluationReport loso_evaluate(std::span<const Sample> samples, const PipelineSpec& spec,
                               const LosoOptions& options = {});
EvaluationReport loso_evaluate(const LabeledSequenceSet& dataset, const PipelineSpec& spec,
                               const LosoOptions& options = {});

/// One report per grade (students never cross grades).
std::vector<EvaluationReport> evaluate_by_grade(std::span<const Sample> samples, const PipelineSpec& spec,
                                                const std::map<std::string, std::string>& student_grades,
                                                const Thresholds& thresholds = {});

/// Population mean and std of the fold AUROCs.
std::pair<double, double> fold_statistics(std::span<const FoldResult> folds);

nlohmann::json confusion_to_json(const ConfusionMatrix& confusion);
nlohmann::json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& doc);

/// Family rows by modality columns, cells `mean ± std`.
std::string format_report_table(std::span<const EvaluationReport> reports);
std::string format_confusion(const ConfusionMatrix& confusion);

}  // namespace engage
