#include "engage/service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace engage {

using nlohmann::json;

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::awaiting_labels: return "awaiting_labels";
    case SessionStatus::retraining: return "retraining";
    case SessionStatus::complete: return "complete";
    case SessionStatus::aborted: return "aborted";
  }
  return "aborted";
}

std::string_view to_string(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::not_found: return "not_found";
    case ApiErrorCode::conflict: return "conflict";
    case ApiErrorCode::validation: return "validation";
    case ApiErrorCode::exhausted: return "exhausted";
  }
  return "validation";
}

int http_status(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::not_found: return 404;
    case ApiErrorCode::conflict: return 409;
    case ApiErrorCode::validation: return 422;
    case ApiErrorCode::exhausted: return 422;
  }
  return 422;
}

json api_error_to_json(const ApiError& error) {
  json body{{"code", to_string(error.code())}, {"message", error.what()}};
  if (!error.pool_ids().empty()) body["pool_ids"] = error.pool_ids();
  return {{"error", body}};
}

json session_state_to_json(const SessionState& s) {
  json pending = json::array();
  for (const auto& p : s.pending) pending.push_back({{"pool_id", p.pool_id}, {"clip_ref", p.clip_ref}, {"second", p.second}});
  return {{"token", s.token},
          {"student_id", s.student_id},
          {"status", to_string(s.status)},
          {"episode", s.episode},
          {"labels_collected", s.labels_collected},
          {"labels_target", s.labels_target},
          {"pending", pending},
          {"auroc_curve", s.auroc_curve}};
}

json batch_to_json(const SessionState& s) {
  json items = json::array();
  for (const auto& p : s.pending) items.push_back({{"pool_id", p.pool_id}, {"clip_ref", p.clip_ref}, {"second", p.second}});
  return {{"token", s.token}, {"status", to_string(s.status)}, {"batch", items}};
}

SessionManager::SessionManager(Options options) : options_(std::move(options)) {}

void SessionManager::register_model(const std::string& model_id, const PipelineSpec& spec, std::vector<Sample> training) {
  spec.classifier.validate();
  std::lock_guard lock(mutex_);
  models_[model_id] = ModelEntry{spec, std::make_shared<const std::vector<Sample>>(std::move(training))};
}

void SessionManager::register_student(const std::string& student_id, std::span<const Sample> personal) {
  auto [pool, evaluation] = split_personal_samples(personal, options_.pool_fraction, options_.seed);
  register_student(student_id, std::move(pool), std::move(evaluation));
}

void SessionManager::register_student(const std::string& student_id, UnlabeledPool pool, std::vector<Sample> evaluation) {
  std::lock_guard lock(mutex_);
  students_[student_id] = StudentEntry{std::move(pool), std::move(evaluation)};
}

std::vector<std::string> SessionManager::students() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : students_) out.push_back(id);
  return out;
}

std::vector<std::string> SessionManager::models() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : models_) out.push_back(id);
  return out;
}

void SessionManager::set_transition_observer(TransitionObserver observer) {
  std::lock_guard lock(mutex_);
  observer_ = std::move(observer);
}

SessionManager::Entry& SessionManager::find(const std::string& token) {
  auto it = sessions_.find(token);
  if (it == sessions_.end()) throw ApiError(ApiErrorCode::not_found, "unknown session token '" + token + "'");
  return it->second;
}

const SessionManager::Entry& SessionManager::find(const std::string& token) const {
  auto it = sessions_.find(token);
  if (it == sessions_.end()) throw ApiError(ApiErrorCode::not_found, "unknown session token '" + token + "'");
  return it->second;
}

void SessionManager::transition(Entry& entry, SessionStatus to) {
  const SessionStatus from = entry.status;
  entry.status = to;
  if (observer_) observer_(entry.session.token, from, to);
}

SessionState SessionManager::snapshot(const Entry& e) const {
  SessionState s;
  s.token = e.session.token;
  s.student_id = e.session.student_id;
  s.status = e.status;
  s.pending = e.status == SessionStatus::awaiting_labels ? e.pending : std::vector<PendingItem>{};
  s.episode = e.session.episode;
  s.labels_collected = e.session.labels.size();
  s.labels_target = e.session.max_episodes * e.session.batch_size;
  s.auroc_curve = e.session.auroc_curve;
  return s;
}

std::vector<PendingItem> SessionManager::pending_items(const PersonalizationSession& session,
                                                       const UnlabeledPool& pool) const {
  std::vector<PendingItem> items;
  for (PoolId id : next_batch(session, pool)) {
    const auto& entry = pool.entry(id);
    items.push_back(PendingItem{id, entry.clip_ref, entry.sample.second});
  }
  return items;
}

void SessionManager::persist(const Entry& entry) const {
  if (!options_.state_dir) return;
  std::filesystem::create_directories(*options_.state_dir);
  const auto path = *options_.state_dir / (entry.session.token + ".json");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorKind::parse, "cannot write session state " + tmp);
    json doc = session_to_json(entry.session, entry.pool);
    doc["status"] = to_string(entry.status);
    out << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

SessionState SessionManager::create_session(const CreateSessionRequest& request) {
  if (request.batch < 1) throw ApiError(ApiErrorCode::validation, "batch must be at least 1");
  ModelEntry model;
  StudentEntry student;
  std::string token;
  {
    std::lock_guard lock(mutex_);
    auto m = models_.find(request.model_id);
    if (m == models_.end()) throw ApiError(ApiErrorCode::not_found, "unknown model '" + request.model_id + "'");
    auto s = students_.find(request.student_id);
    if (s == students_.end()) throw ApiError(ApiErrorCode::not_found, "unknown student '" + request.student_id + "'");
    model = m->second;
    student = s->second;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(mix_seed(options_.seed ^ 0x746f6b656eULL, next_token_++)));
    token = buf;
  }
  const std::size_t needed = request.episodes * request.batch;
  if (student.pool.remaining() < needed) {
    throw ApiError(ApiErrorCode::exhausted, "pool of " + std::to_string(student.pool.remaining()) +
                                                " entries cannot supply " + std::to_string(needed) + " labels");
  }
  auto base = std::make_shared<std::vector<Sample>>();
  for (const auto& s : *model.training) {
    if (s.student_id != request.student_id) base->push_back(s);
  }
  Entry entry;
  try {
    entry.session = start_session(request.student_id, model.spec, base, student.evaluation, request.episodes,
                                  request.batch);
  } catch (const Error& e) {
    throw ApiError(ApiErrorCode::validation, e.what());
  }
  entry.session.token = token;
  entry.pool = student.pool;
  entry.training_runs.assign(request.episodes, 0);
  if (entry.session.complete()) {
    entry.status = SessionStatus::complete;
  } else {
    entry.pending = pending_items(entry.session, entry.pool);
  }
  std::lock_guard lock(mutex_);
  auto& stored = sessions_.emplace(token, std::move(entry)).first->second;
  persist(stored);
  return snapshot(stored);
}

SessionState SessionManager::get_query_batch(const std::string& token) const {
  std::lock_guard lock(mutex_);
  const Entry& e = find(token);
  if (e.status == SessionStatus::retraining) {
    throw ApiError(ApiErrorCode::conflict, "session is retraining; batch not available yet");
  }
  return snapshot(e);
}

SessionState SessionManager::get_status(const std::string& token) const {
  std::lock_guard lock(mutex_);
  return snapshot(find(token));
}

SessionState SessionManager::abort_session(const std::string& token) {
  std::lock_guard lock(mutex_);
  Entry& e = find(token);
  if (e.status == SessionStatus::complete || e.status == SessionStatus::aborted) {
    throw ApiError(ApiErrorCode::conflict, "session already " + std::string(to_string(e.status)));
  }
  transition(e, SessionStatus::aborted);
  e.pending.clear();
  ++e.generation;
  persist(e);
  return snapshot(e);
}

SubmitTicket SessionManager::begin_submit(const std::string& token,
                                          std::span<const std::pair<PoolId, EngagementLevel>> labels) {
  std::lock_guard lock(mutex_);
  Entry& e = find(token);
  if (e.status != SessionStatus::awaiting_labels) {
    throw ApiError(ApiErrorCode::conflict, "session is " + std::string(to_string(e.status)) + "; labels not accepted");
  }
  std::set<PoolId> labeled;
  for (const auto& l : e.session.labels) labeled.insert(l.first);
  std::vector<PoolId> replayed;
  for (const auto& l : labels) {
    if (labeled.count(l.first)) replayed.push_back(l.first);
  }
  if (!replayed.empty()) throw ApiError(ApiErrorCode::conflict, "pool ids already labeled", replayed);

  std::set<PoolId> expected;
  for (const auto& p : e.pending) expected.insert(p.pool_id);
  std::set<PoolId> seen;
  std::vector<PoolId> offending;
  for (const auto& l : labels) {
    if (!expected.count(l.first) || !seen.insert(l.first).second) offending.push_back(l.first);
  }
  for (PoolId id : expected) {
    if (!seen.count(id)) offending.push_back(id);
  }
  if (!offending.empty()) {
    std::sort(offending.begin(), offending.end());
    offending.erase(std::unique(offending.begin(), offending.end()), offending.end());
    throw ApiError(ApiErrorCode::validation, "labels must cover exactly the pending batch, each id once", offending);
  }

  transition(e, SessionStatus::retraining);
  ++e.generation;
  return SubmitTicket{token, e.generation, {labels.begin(), labels.end()}, e.session, e.pool};
}

SessionState SessionManager::finish_submit(SubmitTicket ticket) {
  std::vector<PendingItem> next;
  std::optional<ApiError> failure;
  try {
    apply_labels(ticket.session, ticket.pool, ticket.labels);
    if (!ticket.session.complete()) next = pending_items(ticket.session, ticket.pool);
  } catch (const Error& err) {
    failure = ApiError(ApiErrorCode::validation, std::string("retraining failed: ") + err.what());
  }

  std::lock_guard lock(mutex_);
  Entry& e = find(ticket.token);
  if (e.generation != ticket.generation || e.status != SessionStatus::retraining) {
    // Aborted (or superseded) while retraining: the result is discarded.
    throw ApiError(ApiErrorCode::conflict, "session changed while retraining; result discarded");
  }
  if (failure) {
    transition(e, SessionStatus::awaiting_labels);
    throw *failure;
  }
  const std::size_t finished_episode = e.session.episode;
  e.session = std::move(ticket.session);
  e.pool = std::move(ticket.pool);
  e.pending = std::move(next);
  if (finished_episode < e.training_runs.size()) ++e.training_runs[finished_episode];
  transition(e, e.session.complete() ? SessionStatus::complete : SessionStatus::awaiting_labels);
  persist(e);
  return snapshot(e);
}

SessionState SessionManager::submit_labels(const std::string& token,
                                           std::span<const std::pair<PoolId, EngagementLevel>> labels) {
  return finish_submit(begin_submit(token, labels));
}

std::vector<std::size_t> SessionManager::training_runs(const std::string& token) const {
  std::lock_guard lock(mutex_);
  return find(token).training_runs;
}

}  // namespace engage
