#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "engage/ingest.hpp"
#include "engage/personalization.hpp"
#include "engage/pipeline.hpp"

namespace engage {

struct PersonalizationConfig {
  std::size_t episodes = 6;
  std::size_t batch = 10;
  double pool_fraction = 0.5;
  SelectionStrategy strategy = SelectionStrategy::margin;
  std::string student_id;  // empty: every student in turn
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> state_dir;
};

/// One JSON document: a manifest (path or inline object), the classifier
/// spec, input selection and the personalization/service blocks.
struct EngageConfig {
  std::optional<DatasetManifest> manifest;
  PipelineSpec pipeline;
  PersonalizationConfig personalization;
  ServiceConfig service;
  std::uint64_t seed = 0;

  /// Sets the config seed and the classifier seed together.
  void override_seed(std::uint64_t value);
};

/// Relative paths resolve against `base_dir`. Unknown keys are rejected.
EngageConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
EngageConfig load_config(const std::filesystem::path& path);

}  // namespace engage
