#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/pipeline.hpp"

namespace engage {

using PoolId = std::int64_t;

struct PoolEntry {
  PoolId id = 0;
  Sample sample;
  std::string clip_ref;
};

/// Immutable entries shared between copies plus a per-copy remaining mask, so
/// snapshots are cheap.
class UnlabeledPool {
 public:
  UnlabeledPool() = default;
  /// Throws validation on duplicate ids.
  explicit UnlabeledPool(std::vector<PoolEntry> entries);

  std::size_t size() const { return entries_ ? entries_->size() : 0; }
  std::size_t remaining() const { return remaining_count_; }
  bool empty() const { return remaining_count_ == 0; }
  bool is_remaining(PoolId id) const;
  bool contains(PoolId id) const { return index_.count(id) > 0; }
  const PoolEntry& entry(PoolId id) const;
  /// Remaining ids in ascending order.
  std::vector<PoolId> remaining_ids() const;
  /// Throws validation (pool unchanged) if any id is unknown or already removed.
  void remove(std::span<const PoolId> ids);

  friend bool operator==(const UnlabeledPool& a, const UnlabeledPool& b) {
    return a.entries_ == b.entries_ && a.mask_ == b.mask_;
  }

 private:
  std::shared_ptr<const std::vector<PoolEntry>> entries_;
  std::map<PoolId, std::size_t> index_;
  std::vector<bool> mask_;
  std::size_t remaining_count_ = 0;
};

struct MarginQuery {
  PoolId pool_id = 0;
  double margin = 0.0;  // p[first] - p[second]
  EngagementLevel first = EngagementLevel::low;
  EngagementLevel second = EngagementLevel::medium;
};

/// Gap between the two most likely levels (ties between levels go lower first).
MarginQuery margin_query(PoolId id, const LabelDistribution& distribution);

std::vector<MarginQuery> margin_scores(const EngagementModel& model, const UnlabeledPool& pool);

/// The min(k, n) smallest margins, ascending; equal margins by smaller id.
/// Throws exhausted on an empty query list.
std::vector<PoolId> select_batch(std::span<const MarginQuery> queries, std::size_t k = 10);

/// Label source for queried pool entries. Throws oracle_unavailable when no
/// answer can be given.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  virtual std::vector<EngagementLevel> label(std::span<const PoolId> ids) = 0;
};

/// Ground-truth oracle for simulation; logs every id it was asked about.
class StoredLabelOracle final : public LabelOracle {
 public:
  explicit StoredLabelOracle(std::map<PoolId, EngagementLevel> truth) : truth_(std::move(truth)) {}
  static StoredLabelOracle from_pool(const UnlabeledPool& pool);
  std::vector<EngagementLevel> label(std::span<const PoolId> ids) override;
  const std::vector<PoolId>& queried() const { return queried_; }

 private:
  std::map<PoolId, EngagementLevel> truth_;
  std::vector<PoolId> queried_;
};

enum class SelectionStrategy { margin, random };

std::string_view to_string(SelectionStrategy strategy);
SelectionStrategy parse_selection_strategy(std::string_view text);

struct PersonalizationSession {
  std::string token;
  std::string student_id;
  PipelineSpec spec;
  SelectionStrategy strategy = SelectionStrategy::margin;
  std::shared_ptr<const std::vector<Sample>> base_training;
  std::vector<Sample> evaluation;  // frozen personal test split
  EngagementModel model;
  std::size_t episode = 0;
  std::size_t max_episodes = 6;
  std::size_t batch_size = 10;
  std::vector<double> auroc_curve;     // episode + 1 points
  std::vector<std::size_t> labels_used;  // parallel to auroc_curve
  std::vector<std::pair<PoolId, EngagementLevel>> labels;

  bool complete() const { return episode >= max_episodes; }
};

/// Fits the person-independent model on `base_training` and records point 0.
PersonalizationSession start_session(std::string student_id, const PipelineSpec& spec,
                                     std::shared_ptr<const std::vector<Sample>> base_training,
                                     std::vector<Sample> evaluation, std::size_t episodes = 6,
                                     std::size_t batch = 10);

/// Weighted AUROC of the session model on its evaluation split.
double evaluate_session_model(const EngagementModel& model, std::span<const Sample> evaluation);

/// Pool ids the next episode would query (margin or random strategy).
std::vector<PoolId> next_batch(const PersonalizationSession& session, const UnlabeledPool& pool);

/// Removes the labeled ids from the pool, refits on base + personal labels
/// with the original seed and appends an AUROC point. Any error leaves both
/// arguments untouched.
void apply_labels(PersonalizationSession& session, UnlabeledPool& pool,
                  std::span<const std::pair<PoolId, EngagementLevel>> labels);

/// One batch: select, ask the oracle, apply. Atomic on failure.
void personalize_episode(PersonalizationSession& session, UnlabeledPool& pool, LabelOracle& oracle);

/// Runs the remaining episodes and returns the AUROC curve. Throws exhausted
/// before any labeling when the pool cannot supply every batch.
std::vector<double> run_personalization(PersonalizationSession& session, UnlabeledPool& pool, LabelOracle& oracle);

struct SimulationConfig {
  PipelineSpec spec;
  std::string student_id;  // empty: first student
  double pool_fraction = 0.5;
  std::size_t episodes = 6;
  std::size_t batch = 10;
  SelectionStrategy strategy = SelectionStrategy::margin;
  std::uint64_t seed = 0;  // pool/evaluation split
};

struct SimulationResult {
  std::string student_id;
  std::vector<double> curve;
  std::vector<std::size_t> labels_used;
};

/// Splits `student_id`'s samples into pool and evaluation, trains on every
/// other student and personalizes with a ground-truth oracle.
std::pair<UnlabeledPool, std::vector<Sample>> split_personal_samples(std::span<const Sample> personal,
                                                                     double pool_fraction, std::uint64_t seed);
SimulationResult simulate_personalization(std::span<const Sample> samples, const SimulationConfig& config);

nlohmann::json session_to_json(const PersonalizationSession& session, const UnlabeledPool& pool);
/// Rebuilds a session from a saved document by refitting on the recorded labels.
std::pair<PersonalizationSession, UnlabeledPool> session_from_json(
    const nlohmann::json& doc, std::shared_ptr<const std::vector<Sample>> base_training,
    std::vector<Sample> evaluation, const UnlabeledPool& original_pool);

/// `episode,labels_used,auroc`
void write_curve_csv(std::ostream& out, std::span<const double> curve, std::span<const std::size_t> labels_used);

}  // namespace engage
