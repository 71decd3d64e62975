#include "engage/config.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace engage {

using nlohmann::json;

namespace {

void only_keys(const json& object, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!object.is_object()) throw Error(ErrorKind::validation, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::validation, "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void EngageConfig::override_seed(std::uint64_t value) {
  seed = value;
  pipeline.classifier.seed = value;
}

EngageConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  only_keys(doc, {"manifest", "classifier", "input", "seed", "personalization", "service"}, "config");
  EngageConfig config;
  try {
    if (doc.contains("manifest")) {
      const auto& m = doc["manifest"];
      config.manifest = m.is_string() ? load_manifest(resolve(base_dir, m.get<std::string>()))
                                      : manifest_from_json(m, base_dir);
    }
    if (doc.contains("classifier")) config.pipeline.classifier = spec_from_json(doc["classifier"]);
    if (doc.contains("input")) config.pipeline.input = parse_input_selection(doc["input"].get<std::string>());
    if (doc.contains("seed")) {
      config.seed = doc["seed"].get<std::uint64_t>();
      if (!doc.contains("classifier") || !doc["classifier"].contains("seed")) {
        config.pipeline.classifier.seed = config.seed;
      }
    }
    if (doc.contains("personalization")) {
      const auto& p = doc["personalization"];
      only_keys(p, {"episodes", "batch", "pool_fraction", "strategy", "student_id"}, "config.personalization");
      auto& pc = config.personalization;
      pc.episodes = p.value("episodes", pc.episodes);
      pc.batch = p.value("batch", pc.batch);
      pc.pool_fraction = p.value("pool_fraction", pc.pool_fraction);
      if (p.contains("strategy")) pc.strategy = parse_selection_strategy(p["strategy"].get<std::string>());
      pc.student_id = p.value("student_id", pc.student_id);
      if (pc.batch < 1) throw Error(ErrorKind::validation, "personalization.batch must be at least 1");
      if (pc.pool_fraction <= 0.0 || pc.pool_fraction >= 1.0) {
        throw Error(ErrorKind::validation, "personalization.pool_fraction must lie strictly between 0 and 1");
      }
    }
    if (doc.contains("service")) {
      const auto& s = doc["service"];
      only_keys(s, {"host", "port", "state_dir"}, "config.service");
      config.service.host = s.value("host", config.service.host);
      config.service.port = s.value("port", config.service.port);
      if (s.contains("state_dir")) config.service.state_dir = resolve(base_dir, s["state_dir"].get<std::string>());
      if (config.service.port < 0 || config.service.port > 65535) {
        throw Error(ErrorKind::validation, "service.port must lie in [0, 65535]");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("malformed config: ") + e.what());
  }
  config.pipeline.classifier.validate();
  return config;
}

EngageConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::validation, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::validation, "config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

}  // namespace engage
