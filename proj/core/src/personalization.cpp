#include "engage/personalization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "engage/csv.hpp"
#include "engage/evaluation.hpp"

namespace engage {

using nlohmann::json;

UnlabeledPool::UnlabeledPool(std::vector<PoolEntry> entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!index_.emplace(entries[i].id, i).second) {
      throw Error(ErrorKind::validation, "duplicate pool id " + std::to_string(entries[i].id));
    }
  }
  mask_.assign(entries.size(), true);
  remaining_count_ = entries.size();
  entries_ = std::make_shared<const std::vector<PoolEntry>>(std::move(entries));
}

bool UnlabeledPool::is_remaining(PoolId id) const {
  auto it = index_.find(id);
  return it != index_.end() && mask_[it->second];
}

const PoolEntry& UnlabeledPool::entry(PoolId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorKind::not_found, "unknown pool id " + std::to_string(id));
  return (*entries_)[it->second];
}

std::vector<PoolId> UnlabeledPool::remaining_ids() const {
  std::vector<PoolId> ids;
  for (const auto& [id, i] : index_) {
    if (mask_[i]) ids.push_back(id);
  }
  return ids;
}

void UnlabeledPool::remove(std::span<const PoolId> ids) {
  std::set<PoolId> seen;
  for (PoolId id : ids) {
    if (!is_remaining(id) || !seen.insert(id).second) {
      throw Error(ErrorKind::validation, "pool id " + std::to_string(id) + " is not available for removal");
    }
  }
  for (PoolId id : ids) mask_[index_.at(id)] = false;
  remaining_count_ -= ids.size();
}

MarginQuery margin_query(PoolId id, const LabelDistribution& d) {
  std::array<std::size_t, kLevelCount> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.p[a] > d.p[b]; });
  MarginQuery q;
  q.pool_id = id;
  q.first = level_from_index(order[0]);
  q.second = level_from_index(order[1]);
  q.margin = std::clamp(d.p[order[0]] - d.p[order[1]], 0.0, 1.0);
  return q;
}

std::vector<MarginQuery> margin_scores(const EngagementModel& model, const UnlabeledPool& pool) {
  std::vector<MarginQuery> out;
  for (PoolId id : pool.remaining_ids()) {
    out.push_back(margin_query(id, uncertainty_distribution(model, pool.entry(id).sample)));
  }
  return out;
}

std::vector<PoolId> select_batch(std::span<const MarginQuery> queries, std::size_t k) {
  if (k < 1) throw Error(ErrorKind::validation, "batch size must be at least 1");
  if (queries.empty()) throw Error(ErrorKind::exhausted, "unlabeled pool is exhausted");
  std::vector<MarginQuery> sorted(queries.begin(), queries.end());
  const auto less = [](const MarginQuery& a, const MarginQuery& b) {
    return a.margin != b.margin ? a.margin < b.margin : a.pool_id < b.pool_id;
  };
  const std::size_t take = std::min(k, sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(take), sorted.end(), less);
  std::vector<PoolId> ids;
  for (std::size_t i = 0; i < take; ++i) ids.push_back(sorted[i].pool_id);
  return ids;
}

StoredLabelOracle StoredLabelOracle::from_pool(const UnlabeledPool& pool) {
  std::map<PoolId, EngagementLevel> truth;
  for (PoolId id : pool.remaining_ids()) truth[id] = pool.entry(id).sample.level;
  return StoredLabelOracle(std::move(truth));
}

std::vector<EngagementLevel> StoredLabelOracle::label(std::span<const PoolId> ids) {
  std::vector<EngagementLevel> out;
  for (PoolId id : ids) {
    auto it = truth_.find(id);
    if (it == truth_.end()) throw Error(ErrorKind::oracle_unavailable, "no stored label for pool id " + std::to_string(id));
    out.push_back(it->second);
  }
  queried_.insert(queried_.end(), ids.begin(), ids.end());
  return out;
}

std::string_view to_string(SelectionStrategy s) { return s == SelectionStrategy::margin ? "margin" : "random"; }

SelectionStrategy parse_selection_strategy(std::string_view text) {
  if (text == "margin") return SelectionStrategy::margin;
  if (text == "random") return SelectionStrategy::random;
  throw Error(ErrorKind::validation, "unknown selection strategy '" + std::string(text) + "'");
}

double evaluate_session_model(const EngagementModel& model, std::span<const Sample> evaluation) {
  std::vector<LabelDistribution> dists;
  std::vector<EngagementLevel> actual;
  for (const auto& s : evaluation) {
    dists.push_back(predict_sample(model, s).aggregate);
    actual.push_back(s.level);
  }
  return weighted_auroc(dists, actual);
}

PersonalizationSession start_session(std::string student_id, const PipelineSpec& spec,
                                     std::shared_ptr<const std::vector<Sample>> base_training,
                                     std::vector<Sample> evaluation, std::size_t episodes, std::size_t batch) {
  if (!base_training || base_training->empty()) throw Error(ErrorKind::no_data, "no base training data");
  if (batch < 1) throw Error(ErrorKind::validation, "batch size must be at least 1");
  PersonalizationSession session;
  session.student_id = std::move(student_id);
  session.spec = spec;
  session.base_training = std::move(base_training);
  session.evaluation = std::move(evaluation);
  session.max_episodes = episodes;
  session.batch_size = batch;
  session.model = fit_engagement_model(spec, *session.base_training);
  session.auroc_curve.push_back(evaluate_session_model(session.model, session.evaluation));
  session.labels_used.push_back(0);
  return session;
}

std::vector<PoolId> next_batch(const PersonalizationSession& session, const UnlabeledPool& pool) {
  if (pool.empty()) throw Error(ErrorKind::exhausted, "unlabeled pool is exhausted");
  if (session.strategy == SelectionStrategy::margin) {
    const auto queries = margin_scores(session.model, pool);
    return select_batch(queries, session.batch_size);
  }
  auto ids = pool.remaining_ids();
  std::mt19937_64 rng(mix_seed(mix_seed(session.spec.classifier.seed, 0x72616e64), session.episode));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(std::min(ids.size(), session.batch_size));
  return ids;
}

namespace {

std::vector<Sample> training_set(const PersonalizationSession& session, const UnlabeledPool& pool,
                                 std::span<const std::pair<PoolId, EngagementLevel>> labels) {
  std::vector<Sample> train(*session.base_training);
  train.reserve(train.size() + labels.size());
  for (const auto& [id, level] : labels) {
    Sample s = pool.entry(id).sample;
    s.level = level;
    train.push_back(std::move(s));
  }
  return train;
}

}  // namespace

void apply_labels(PersonalizationSession& session, UnlabeledPool& pool,
                  std::span<const std::pair<PoolId, EngagementLevel>> labels) {
  if (session.complete()) throw Error(ErrorKind::exhausted, "session already completed every episode");
  if (labels.empty()) throw Error(ErrorKind::validation, "no labels supplied");

  UnlabeledPool next_pool = pool;
  std::vector<PoolId> ids;
  for (const auto& l : labels) ids.push_back(l.first);
  next_pool.remove(ids);

  auto all_labels = session.labels;
  all_labels.insert(all_labels.end(), labels.begin(), labels.end());
  EngagementModel model = fit_engagement_model(session.spec, training_set(session, pool, all_labels));
  const double auroc = evaluate_session_model(model, session.evaluation);

  // Commit only after every fallible step succeeded.
  session.model = std::move(model);
  session.labels = std::move(all_labels);
  session.auroc_curve.push_back(auroc);
  session.labels_used.push_back(session.labels.size());
  session.episode += 1;
  pool = std::move(next_pool);
}

void personalize_episode(PersonalizationSession& session, UnlabeledPool& pool, LabelOracle& oracle) {
  const auto ids = next_batch(session, pool);
  const auto levels = oracle.label(ids);
  if (levels.size() != ids.size()) throw Error(ErrorKind::oracle_unavailable, "oracle answered a partial batch");
  std::vector<std::pair<PoolId, EngagementLevel>> labels;
  for (std::size_t i = 0; i < ids.size(); ++i) labels.emplace_back(ids[i], levels[i]);
  apply_labels(session, pool, labels);
}

std::vector<double> run_personalization(PersonalizationSession& session, UnlabeledPool& pool, LabelOracle& oracle) {
  const std::size_t episodes_left = session.max_episodes - std::min(session.episode, session.max_episodes);
  if (pool.remaining() < episodes_left * session.batch_size) {
    throw Error(ErrorKind::exhausted, "pool holds " + std::to_string(pool.remaining()) + " entries, " +
                                          std::to_string(episodes_left * session.batch_size) + " needed");
  }
  while (!session.complete()) personalize_episode(session, pool, oracle);
  return session.auroc_curve;
}

std::pair<UnlabeledPool, std::vector<Sample>> split_personal_samples(std::span<const Sample> personal,
                                                                     double pool_fraction, std::uint64_t seed) {
  if (pool_fraction <= 0.0 || pool_fraction >= 1.0) {
    throw Error(ErrorKind::validation, "pool fraction must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> order(personal.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x706f6f6c));
  std::shuffle(order.begin(), order.end(), rng);
  const auto pool_size = static_cast<std::size_t>(std::llround(pool_fraction * static_cast<double>(personal.size())));
  std::vector<std::size_t> pool_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool_size));
  std::vector<std::size_t> eval_idx(order.begin() + static_cast<std::ptrdiff_t>(pool_size), order.end());
  std::sort(pool_idx.begin(), pool_idx.end());
  std::sort(eval_idx.begin(), eval_idx.end());
  std::vector<PoolEntry> entries;
  for (std::size_t i : pool_idx) {
    const auto& s = personal[i];
    entries.push_back(PoolEntry{static_cast<PoolId>(i), s, s.session_id + "/" + s.student_id + "/" + std::to_string(s.second)});
  }
  std::vector<Sample> evaluation;
  for (std::size_t i : eval_idx) evaluation.push_back(personal[i]);
  return {UnlabeledPool(std::move(entries)), std::move(evaluation)};
}

SimulationResult simulate_personalization(std::span<const Sample> samples, const SimulationConfig& config) {
  std::set<std::string> students;
  for (const auto& s : samples) {
    if (s.has(config.spec.input)) students.insert(s.student_id);
  }
  if (students.size() < 2) throw Error(ErrorKind::validation, "simulation needs at least two students");
  const std::string student = config.student_id.empty() ? *students.begin() : config.student_id;
  if (!students.count(student)) throw Error(ErrorKind::not_found, "unknown student " + student);

  auto base = std::make_shared<std::vector<Sample>>();
  std::vector<Sample> personal;
  for (const auto& s : samples) {
    if (!s.has(config.spec.input)) continue;
    (s.student_id == student ? personal : *base).push_back(s);
  }
  auto [pool, evaluation] = split_personal_samples(personal, config.pool_fraction, config.seed);
  if (pool.remaining() < config.episodes * config.batch) {
    throw Error(ErrorKind::exhausted, "personal pool too small for the requested episodes");
  }
  auto session = start_session(student, config.spec, base, std::move(evaluation), config.episodes, config.batch);
  session.strategy = config.strategy;
  auto oracle = StoredLabelOracle::from_pool(pool);
  run_personalization(session, pool, oracle);
  return {student, session.auroc_curve, session.labels_used};
}

json session_to_json(const PersonalizationSession& session, const UnlabeledPool& pool) {
  json labels = json::array();
  for (const auto& [id, level] : session.labels) labels.push_back({{"pool_id", id}, {"level", to_string(level)}});
  return {{"format", "engage.session/1"},
          {"token", session.token},
          {"student_id", session.student_id},
          {"spec", pipeline_spec_to_json(session.spec)},
          {"strategy", to_string(session.strategy)},
          {"episode", session.episode},
          {"max_episodes", session.max_episodes},
          {"batch_size", session.batch_size},
          {"auroc_curve", session.auroc_curve},
          {"labels_used", session.labels_used},
          {"labels", labels},
          {"remaining", pool.remaining_ids()}};
}

std::pair<PersonalizationSession, UnlabeledPool> session_from_json(
    const json& doc, std::shared_ptr<const std::vector<Sample>> base_training, std::vector<Sample> evaluation,
    const UnlabeledPool& original_pool) {
  try {
    if (doc.value("format", std::string()) != "engage.session/1") {
      throw Error(ErrorKind::parse, "not an engage session document");
    }
    PersonalizationSession s;
    s.token = doc.at("token").get<std::string>();
    s.student_id = doc.at("student_id").get<std::string>();
    s.spec = pipeline_spec_from_json(doc.at("spec"));
    s.strategy = parse_selection_strategy(doc.at("strategy").get<std::string>());
    s.episode = doc.at("episode").get<std::size_t>();
    s.max_episodes = doc.at("max_episodes").get<std::size_t>();
    s.batch_size = doc.at("batch_size").get<std::size_t>();
    s.auroc_curve = doc.at("auroc_curve").get<std::vector<double>>();
    s.labels_used = doc.at("labels_used").get<std::vector<std::size_t>>();
    for (const auto& l : doc.at("labels")) {
      s.labels.emplace_back(l.at("pool_id").get<PoolId>(), parse_level(l.at("level").get<std::string>()));
    }
    if (s.auroc_curve.size() != s.episode + 1 || s.labels_used.size() != s.auroc_curve.size()) {
      throw Error(ErrorKind::parse, "session document curve does not match its episode count");
    }
    s.base_training = std::move(base_training);
    s.evaluation = std::move(evaluation);

    UnlabeledPool pool = original_pool;
    std::vector<PoolId> used;
    for (const auto& [id, level] : s.labels) used.push_back(id);
    pool.remove(used);
    if (pool.remaining_ids() != doc.at("remaining").get<std::vector<PoolId>>()) {
      throw Error(ErrorKind::parse, "session document does not match the supplied pool");
    }
    s.model = fit_engagement_model(s.spec, training_set(s, original_pool, s.labels));
    return {std::move(s), std::move(pool)};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed session document: ") + e.what());
  }
}

void write_curve_csv(std::ostream& out, std::span<const double> curve, std::span<const std::size_t> labels_used) {
  if (curve.size() != labels_used.size()) throw Error(ErrorKind::dimension, "curve and label counts differ in length");
  out << "episode,labels_used,auroc\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << i << ',' << labels_used[i] << ',' << csv::format_double(curve[i]) << '\n';
  }
}

}  // namespace engage
