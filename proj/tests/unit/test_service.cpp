#include <algorithm>
#include <filesystem>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "engage/service.hpp"
#include "helpers.hpp"

namespace engage {
namespace {

using Labels = std::vector<std::pair<PoolId, EngagementLevel>>;

template <typename F>
ApiErrorCode api_code(F&& f) {
  try {
    f();
  } catch (const ApiError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ApiError thrown";
  return ApiErrorCode::validation;
}

TEST(Service, CreateWithDefaultsServesTenPending) {
  SessionManager manager;
  testing::populate_manager(manager);
  const auto state = manager.create_session({"target", "base"});
  EXPECT_EQ(state.status, SessionStatus::awaiting_labels);
  EXPECT_EQ(state.pending.size(), 10u);
  EXPECT_EQ(state.episode, 0u);
  EXPECT_EQ(state.labels_target, 60u);
  EXPECT_EQ(state.auroc_curve.size(), 1u);
  EXPECT_EQ(state.token.size(), 16u);
  for (const auto& item : state.pending) {
    EXPECT_EQ(item.clip_ref, "clips/target/" + std::to_string(item.pool_id) + ".mp4");
  }
  EXPECT_EQ(manager.students(), std::vector<std::string>{"target"});
  EXPECT_EQ(manager.models(), std::vector<std::string>{"base"});
}

TEST(Service, CreateErrors) {
  SessionManager manager;
  testing::populate_manager(manager, 5);
  EXPECT_EQ(api_code([&] { manager.create_session({"nobody", "base"}); }), ApiErrorCode::not_found);
  EXPECT_EQ(api_code([&] { manager.create_session({"target", "missing"}); }), ApiErrorCode::not_found);
  EXPECT_EQ(api_code([&] { manager.create_session({"target", "base"}); }), ApiErrorCode::exhausted);
  EXPECT_EQ(api_code([&] { manager.create_session({"target", "base", 1, 0}); }), ApiErrorCode::validation);
  EXPECT_EQ(manager.create_session({"target", "base", 1, 5}).pending.size(), 5u);
  EXPECT_EQ(http_status(ApiErrorCode::not_found), 404);
  EXPECT_EQ(http_status(ApiErrorCode::conflict), 409);
  EXPECT_EQ(http_status(ApiErrorCode::validation), 422);
  EXPECT_EQ(http_status(ApiErrorCode::exhausted), 422);
}

TEST(Service, BatchIsIdempotent) {
  SessionManager manager;
  testing::populate_manager(manager);
  const auto state = manager.create_session({"target", "base"});
  const auto a = manager.get_query_batch(state.token);
  const auto b = manager.get_query_batch(state.token);
  EXPECT_EQ(a.pending, b.pending);
  EXPECT_EQ(a.pending, state.pending);
  EXPECT_EQ(api_code([&] { manager.get_query_batch("ffff"); }), ApiErrorCode::not_found);
}

TEST(Service, IncompleteBatchRejectedWithoutStateChange) {
  SessionManager manager;
  testing::populate_manager(manager);
  const auto state = manager.create_session({"target", "base"});
  auto labels = testing::truth_labels(state);
  const PoolId missing = labels.back().first;
  labels.pop_back();
  try {
    manager.submit_labels(state.token, labels);
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.code(), ApiErrorCode::validation);
    EXPECT_EQ(e.pool_ids(), std::vector<PoolId>{missing});
    const auto body = api_error_to_json(e);
    EXPECT_EQ(body["error"]["code"], "validation");
    EXPECT_EQ(body["error"]["pool_ids"][0], missing);
  }
  labels.push_back({999, EngagementLevel::low});
  labels.push_back({missing, EngagementLevel::low});
  EXPECT_EQ(api_code([&] { manager.submit_labels(state.token, labels); }), ApiErrorCode::validation);
  const auto after = manager.get_status(state.token);
  EXPECT_EQ(after.status, SessionStatus::awaiting_labels);
  EXPECT_EQ(after.pending, state.pending);
  EXPECT_EQ(after.labels_collected, 0u);
  EXPECT_EQ(manager.training_runs(state.token), std::vector<std::size_t>(6, 0));
}

TEST(Service, SixSubmitsComplete) {
  SessionManager manager;
  testing::populate_manager(manager);
  auto state = manager.create_session({"target", "base"});
  std::vector<PoolId> all_ids;
  for (int episode = 0; episode < 6; ++episode) {
    ASSERT_EQ(state.status, SessionStatus::awaiting_labels);
    const auto labels = testing::truth_labels(state);
    for (const auto& l : labels) all_ids.push_back(l.first);
    state = manager.submit_labels(state.token, labels);
    EXPECT_EQ(state.episode, static_cast<std::size_t>(episode + 1));
    EXPECT_EQ(state.labels_collected, static_cast<std::size_t>(10 * (episode + 1)));
  }
  EXPECT_EQ(state.status, SessionStatus::complete);
  EXPECT_TRUE(state.pending.empty());
  EXPECT_EQ(state.auroc_curve.size(), 7u);
  std::sort(all_ids.begin(), all_ids.end());
  EXPECT_EQ(std::unique(all_ids.begin(), all_ids.end()), all_ids.end());
  EXPECT_EQ(manager.training_runs(state.token), std::vector<std::size_t>(6, 1));
  EXPECT_EQ(api_code([&] { manager.submit_labels(state.token, Labels{{all_ids[0], EngagementLevel::low}}); }),
            ApiErrorCode::conflict);
  EXPECT_EQ(api_code([&] { manager.abort_session(state.token); }), ApiErrorCode::conflict);
}

TEST(Service, ReplayIsConflict) {
  SessionManager manager;
  testing::populate_manager(manager);
  auto state = manager.create_session({"target", "base"});
  const auto first = testing::truth_labels(state);
  state = manager.submit_labels(state.token, first);
  try {
    manager.submit_labels(state.token, first);
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.code(), ApiErrorCode::conflict);
    EXPECT_EQ(e.pool_ids().size(), 10u);
  }
  EXPECT_EQ(manager.get_status(state.token).labels_collected, 10u);
  EXPECT_EQ(manager.training_runs(state.token)[0], 1u);
}

TEST(Service, AbortDiscardsInFlightRetrain) {
  SessionManager manager;
  testing::populate_manager(manager);
  const auto state = manager.create_session({"target", "base"});
  auto ticket = manager.begin_submit(state.token, testing::truth_labels(state));
  EXPECT_EQ(manager.get_status(state.token).status, SessionStatus::retraining);
  EXPECT_TRUE(manager.get_status(state.token).pending.empty());
  EXPECT_EQ(api_code([&] { manager.get_query_batch(state.token); }), ApiErrorCode::conflict);
  EXPECT_EQ(manager.abort_session(state.token).status, SessionStatus::aborted);
  EXPECT_EQ(api_code([&] { manager.finish_submit(std::move(ticket)); }), ApiErrorCode::conflict);
  const auto after = manager.get_status(state.token);
  EXPECT_EQ(after.status, SessionStatus::aborted);
  EXPECT_EQ(after.labels_collected, 0u);
  EXPECT_EQ(manager.training_runs(state.token)[0], 0u);
  EXPECT_EQ(api_code([&] { manager.abort_session(state.token); }), ApiErrorCode::conflict);
}

TEST(Service, PersistsStateAfterEveryEpisode) {
  testing::TempDir dir("service_state");
  SessionManager::Options options;
  options.state_dir = dir.path();
  SessionManager manager(options);
  testing::populate_manager(manager);
  auto state = manager.create_session({"target", "base", 2, 10});
  const auto file = dir / (state.token + ".json");
  ASSERT_TRUE(std::filesystem::exists(file));
  state = manager.submit_labels(state.token, testing::truth_labels(state));
  auto doc = nlohmann::json::parse(testing::read_file(file));
  EXPECT_EQ(doc["episode"], 1);
  EXPECT_EQ(doc["labels"].size(), 10u);
  EXPECT_EQ(doc["status"], "awaiting_labels");
  EXPECT_EQ(doc["remaining"].size(), 70u);
}

TEST(Service, ExhaustiveSubmitInterleavings) {
  const auto summary = testing::check_submit_interleavings(3);
  // Orderings for 1..3 clients, each without and with one abort: 1 + 3 + 6 + 30 + 90 + 630.
  EXPECT_EQ(summary.schedules, 760u);
  for (const auto& v : summary.violations) ADD_FAILURE() << v;
}

}  // namespace
}  // namespace engage
