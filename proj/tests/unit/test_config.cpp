#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "engage/config.hpp"
#include "engage/synthetic.hpp"
#include "helpers.hpp"

namespace engage {
namespace {

using nlohmann::json;

TEST(Config, EmptyDocumentKeepsDefaults) {
  const auto c = config_from_json(json::object());
  EXPECT_FALSE(c.manifest.has_value());
  EXPECT_EQ(c.pipeline.classifier.family, Family::random_forest);
  EXPECT_EQ(c.pipeline.input, InputSelection::attention);
  EXPECT_EQ(c.personalization.episodes, 6u);
  EXPECT_EQ(c.personalization.batch, 10u);
  EXPECT_EQ(c.personalization.pool_fraction, 0.5);
  EXPECT_EQ(c.service.host, "127.0.0.1");
  EXPECT_EQ(c.service.port, 8080);
}

TEST(Config, FullDocument) {
  const json doc{{"classifier", {{"family", "mlp"}}},
                 {"input", "score_fusion"},
                 {"seed", 42},
                 {"personalization", {{"episodes", 3}, {"batch", 5}, {"strategy", "random"}, {"student_id", "s02"}}},
                 {"service", {{"port", 9000}, {"state_dir", "state"}}}};
  const auto c = config_from_json(doc, "/data/run");
  EXPECT_EQ(c.pipeline.classifier.family, Family::mlp);
  EXPECT_EQ(c.pipeline.input, InputSelection::score_fusion);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.pipeline.classifier.seed, 42u);
  EXPECT_EQ(c.personalization.episodes, 3u);
  EXPECT_EQ(c.personalization.strategy, SelectionStrategy::random);
  EXPECT_EQ(c.personalization.student_id, "s02");
  EXPECT_EQ(c.service.port, 9000);
  EXPECT_EQ(*c.service.state_dir, std::filesystem::path("/data/run/state"));
}

TEST(Config, ClassifierSeedWinsOverGlobalSeed) {
  const auto c = config_from_json(json{{"seed", 1}, {"classifier", {{"family", "svm_rbf"}, {"seed", 7}}}});
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.pipeline.classifier.seed, 7u);
  auto copy = c;
  copy.override_seed(9);
  EXPECT_EQ(copy.seed, 9u);
  EXPECT_EQ(copy.pipeline.classifier.seed, 9u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const json& doc : {json{{"classifer", json::object()}}, json{{"personalization", {{"rounds", 2}}}},
                          json{{"service", {{"port", 70000}}}}, json{{"personalization", {{"batch", 0}}}},
                          json{{"personalization", {{"pool_fraction", 1.0}}}}, json{{"input", "video"}},
                          json{{"seed", "seven"}}, json{{"classifier", {{"family", "lstm"}, {"input_mode", "middle_frame"}}}}}) {
    try {
      config_from_json(doc);
      ADD_FAILURE() << doc.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::validation) << doc.dump();
    }
  }
}

TEST(Config, LoadsManifestRelativeToConfigFile) {
  testing::TempDir dir("config");
  SyntheticConfig sc;
  sc.students = 2;
  sc.seconds = 3;
  write_synthetic_dataset(generate_synthetic_dataset(sc), dir / "data");
  testing::write_file(dir / "engage.json", R"({"manifest": "data/manifest.json", "input": "affect"})");
  const auto c = load_config(dir / "engage.json");
  ASSERT_TRUE(c.manifest.has_value());
  EXPECT_EQ(c.manifest->sessions.size(), 1u);
  EXPECT_EQ(c.manifest->dimension(Modality::affect), 3u);
  EXPECT_EQ(c.pipeline.input, InputSelection::affect);
  EXPECT_THROW(load_config(dir / "missing.json"), Error);
  testing::write_file(dir / "broken.json", "{");
  EXPECT_THROW(load_config(dir / "broken.json"), Error);
}

}  // namespace
}  // namespace engage
