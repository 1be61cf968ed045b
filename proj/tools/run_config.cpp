// tools/run_config.cpp

// Copyright 2026  The xpn Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "run_config.hpp"

#include <fstream>
#include <sstream>

namespace xpn::cli {

TrainingStageConfig RunConfig::stage(int k) const {
  TrainingStageConfig base = TrainingStageConfig::preset(training_preset, k);
  auto it = stage_overrides.find(k);
  if (it == stage_overrides.end()) return base;
  return TrainingStageConfig::from_json(it->second, base);
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const char* kKnown[] = {"model", "training", "stages", "data", "vocab", "cache", "checkpoint_dir",
                                 "log", "seed", "feature_mode", "skip_stage4", "keep_epoch_checkpoints", "min_count"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown))
      throw ConfigError("run config: unknown key '" + key + "'");
  RunConfig c;
  auto path = [&](const char* key, std::filesystem::path& out) {
    if (!j.contains(key)) return;
    std::filesystem::path p = j.at(key).get<std::string>();
    out = p.is_absolute() ? p : base_dir / p;
  };
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model = m.is_string() ? ModelConfig::preset(m.get<std::string>()) : ModelConfig::from_json(m);
    }
    if (j.contains("training")) c.training_preset = j.at("training").get<std::string>();
    if (j.contains("stages"))
      for (const auto& [key, value] : j.at("stages").items()) {
        int k = 0;
        try {
          k = std::stoi(key);
        } catch (const std::exception&) {
          throw ConfigError("run config: stage key '" + key + "' is not a number");
        }
        if (k < 1 || k > 4) throw ConfigError("run config: stage key must be 1..4, got " + key);
        c.stage_overrides[k] = value;
      }
    path("data", c.data);
    path("vocab", c.vocab);
    path("cache", c.cache);
    c.checkpoint_dir = base_dir / c.checkpoint_dir;
    path("checkpoint_dir", c.checkpoint_dir);
    path("log", c.log);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("feature_mode")) {
      const auto mode = j.at("feature_mode").get<std::string>();
      if (mode == "cache") c.feature_mode = FeatureMode::kCache;
      else if (mode == "live") c.feature_mode = FeatureMode::kLive;
      else throw ConfigError("run config: feature_mode must be cache or live, got '" + mode + "'");
    }
    if (j.contains("skip_stage4")) c.skip_stage4 = j.at("skip_stage4").get<bool>();
    if (j.contains("keep_epoch_checkpoints")) c.keep_epoch_checkpoints = j.at("keep_epoch_checkpoints").get<bool>();
    if (j.contains("min_count")) c.min_count = j.at("min_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (c.data.empty()) throw ConfigError("run config: 'data' is required");
  if (c.vocab.empty()) c.vocab = c.checkpoint_dir / "vocab.txt";
  if (c.cache.empty()) c.cache = c.checkpoint_dir / "features.bin";
  if (c.log.empty()) c.log = c.checkpoint_dir / "train.jsonl";
  // surface preset and override errors before any work starts
  ModelConfig probe = c.model;
  if (probe.vocab_size == 0) probe.vocab_size = kNumReserved + 1;
  probe.validate();
  for (int k = 1; k <= 4; ++k) c.stage(k);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFoundError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  RunConfig c = from_json(j, path.parent_path());
  if (!std::filesystem::exists(c.data)) throw NotFoundError("dataset " + c.data.string() + " does not exist");
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [k, v] : stage_overrides) stages[std::to_string(k)] = v;
  return {{"model", model.to_json()},
          {"training", training_preset},
          {"stages", stages},
          {"data", data.string()},
          {"vocab", vocab.string()},
          {"cache", cache.string()},
          {"checkpoint_dir", checkpoint_dir.string()},
          {"log", log.string()},
          {"seed", seed},
          {"feature_mode", feature_mode == FeatureMode::kCache ? "cache" : "live"},
          {"skip_stage4", skip_stage4},
          {"keep_epoch_checkpoints", keep_epoch_checkpoints},
          {"min_count", min_count}};
}

}  // namespace xpn::cli
