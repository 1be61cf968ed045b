// tools/run_config.hpp

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

#ifndef XPN_TOOLS_RUN_CONFIG_HPP_
#define XPN_TOOLS_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>

#include "json.hpp"
#include "xpn/model.hpp"
#include "xpn/training.hpp"

namespace xpn::cli {

// Contents of the `train` config file. Relative paths are resolved against
// the directory holding the config file.
//
//   {
//     "model": "desk" | {"preset": "desk", "d_model": 64, ...},
//     "training": "desk" | "paper",
//     "stages": {"1": {"num_epochs": 50}, "3": {"initial_lr": 5e-5}},
//     "data": "dataset.jsonl",
//     "vocab": "vocab.txt",
//     "cache": "features.bin",
//     "checkpoint_dir": "checkpoints",
//     "log": "checkpoints/train.jsonl",
//     "seed": 1,
//     "feature_mode": "cache" | "live",
//     "skip_stage4": false,
//     "keep_epoch_checkpoints": false,
//     "min_count": 5
//   }
struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  std::string training_preset = "desk";
  std::map<int, nlohmann::json> stage_overrides;
  std::filesystem::path data;
  std::filesystem::path vocab;
  std::filesystem::path cache;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path log;
  std::uint64_t seed = 1;
  FeatureMode feature_mode = FeatureMode::kCache;
  bool skip_stage4 = false;
  bool keep_epoch_checkpoints = false;
  std::size_t min_count = 5;

  TrainingStageConfig stage(int k) const;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace xpn::cli

#endif  // XPN_TOOLS_RUN_CONFIG_HPP_
