#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "engage/personalization.hpp"

namespace engage {

enum class SessionStatus { awaiting_labels, retraining, complete, aborted };

std::string_view to_string(SessionStatus status);

enum class ApiErrorCode { not_found, conflict, validation, exhausted };

std::string_view to_string(ApiErrorCode code);
int http_status(ApiErrorCode code);

class ApiError : public std::runtime_error {
 public:
  ApiError(ApiErrorCode code, const std::string& message, std::vector<PoolId> pool_ids = {})
      : std::runtime_error(message), code_(code), pool_ids_(std::move(pool_ids)) {}
  ApiErrorCode code() const { return code_; }
  const std::vector<PoolId>& pool_ids() const { return pool_ids_; }

 private:
  ApiErrorCode code_;
  std::vector<PoolId> pool_ids_;
};

nlohmann::json api_error_to_json(const ApiError& error);

struct PendingItem {
  PoolId pool_id = 0;
  std::string clip_ref;
  std::int64_t second = 0;

  friend bool operator==(const PendingItem&, const PendingItem&) = default;
};

struct SessionState {
  std::string token;
  std::string student_id;
  SessionStatus status = SessionStatus::awaiting_labels;
  std::vector<PendingItem> pending;
  std::size_t episode = 0;
  std::size_t labels_collected = 0;
  std::size_t labels_target = 0;
  std::vector<double> auroc_curve;
};

nlohmann::json session_state_to_json(const SessionState& state);
nlohmann::json batch_to_json(const SessionState& state);

struct CreateSessionRequest {
  std::string student_id;
  std::string model_id;
  std::size_t episodes = 6;
  std::size_t batch = 10;
};

/// Handle returned by begin_submit; finish_submit consumes it.
struct SubmitTicket {
  std::string token;
  std::uint64_t generation = 0;
  std::vector<std::pair<PoolId, EngagementLevel>> labels;
  PersonalizationSession session;  // snapshot taken when retraining began
  UnlabeledPool pool;
};

/// Owns personalization sessions. Mutations of one token are serialized by
/// state: a submit moves the session to retraining under the lock, retrains
/// on a private copy and commits under the lock again.
class SessionManager {
 public:
  struct Options {
    std::uint64_t seed = 0;
    double pool_fraction = 0.5;
    /// When set, each session is written here as <token>.json after every episode.
    std::optional<std::filesystem::path> state_dir;
  };

  SessionManager() : SessionManager(Options{}) {}
  explicit SessionManager(Options options);

  /// Training data for a base model; the session student's own samples are
  /// always excluded when the base model is fitted.
  void register_model(const std::string& model_id, const PipelineSpec& spec, std::vector<Sample> training);
  /// Personal samples of one student, split into a pool and a frozen evaluation set.
  void register_student(const std::string& student_id, std::span<const Sample> personal);
  void register_student(const std::string& student_id, UnlabeledPool pool, std::vector<Sample> evaluation);

  SessionState create_session(const CreateSessionRequest& request);
  SessionState get_query_batch(const std::string& token) const;
  SessionState submit_labels(const std::string& token, std::span<const std::pair<PoolId, EngagementLevel>> labels);
  SessionState get_status(const std::string& token) const;
  SessionState abort_session(const std::string& token);

  /// Two halves of submit_labels, exposed so interleavings can be enumerated.
  SubmitTicket begin_submit(const std::string& token, std::span<const std::pair<PoolId, EngagementLevel>> labels);
  SessionState finish_submit(SubmitTicket ticket);

  /// Number of retrains committed for each episode (index = episode number).
  std::vector<std::size_t> training_runs(const std::string& token) const;

  using TransitionObserver = std::function<void(const std::string& token, SessionStatus from, SessionStatus to)>;
  void set_transition_observer(TransitionObserver observer);

  std::vector<std::string> students() const;
  std::vector<std::string> models() const;

 private:
  struct Entry {
    PersonalizationSession session;
    UnlabeledPool pool;
    SessionStatus status = SessionStatus::awaiting_labels;
    std::vector<PendingItem> pending;
    std::uint64_t generation = 0;
    std::vector<std::size_t> training_runs;
  };
  struct ModelEntry {
    PipelineSpec spec;
    std::shared_ptr<const std::vector<Sample>> training;
  };
  struct StudentEntry {
    UnlabeledPool pool;
    std::vector<Sample> evaluation;
  };

  SessionState snapshot(const Entry& entry) const;
  Entry& find(const std::string& token);
  const Entry& find(const std::string& token) const;
  void transition(Entry& entry, SessionStatus to);
  std::vector<PendingItem> pending_items(const PersonalizationSession& session, const UnlabeledPool& pool) const;
  void persist(const Entry& entry) const;

  Options options_;
  mutable std::mutex mutex_;
  std::map<std::string, ModelEntry> models_;
  std::map<std::string, StudentEntry> students_;
  std::map<std::string, Entry> sessions_;
  std::uint64_t next_token_ = 0;
  TransitionObserver observer_;
};

}  // namespace engage
