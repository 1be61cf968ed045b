// include/xpn/training.hpp

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

#ifndef XPN_TRAINING_HPP_
#define XPN_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xpn/data.hpp"
#include "xpn/feature_cache.hpp"
#include "xpn/losses.hpp"
#include "xpn/metrics.hpp"
#include "xpn/model.hpp"
#include "xpn/optimizer.hpp"

namespace xpn {

enum class LossKind { kXe, kScst };

struct TrainingStageConfig {
  int stage = 1;
  LossKind loss = LossKind::kXe;
  bool backbone_frozen = true;
  std::size_t batch_size = 48;
  double initial_lr = 2e-4;
  std::size_t warmup_steps = 0;
  double anneal_factor = 1.0;
  std::size_t anneal_every_epochs = 1;
  std::size_t num_epochs = 1;
  bool fixed_lr = false;
  // Fraction of an epoch to run before stopping; the last stage may stop early.
  double epoch_fraction = 1.0;
  std::size_t scst_samples = 5;
  double sample_temperature = 1.0;

  // The four-stage schedule at full scale.
  static TrainingStageConfig paper(int stage);
  // The same schedule shrunk for the toy data set.
  static TrainingStageConfig desk(int stage);
  static TrainingStageConfig preset(const std::string& name, int stage);

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingStageConfig from_json(const nlohmann::json& j, const TrainingStageConfig& base);
};

// Linear warmup from 0 over `warmup_steps` updates, then
// initial_lr * anneal_factor^floor(epoch / anneal_every_epochs); fixed-rate
// stages return initial_lr. `step` counts updates from 1 within the stage,
// `epoch` counts from 0.
double lr_at(const TrainingStageConfig& stage, std::size_t epoch, std::size_t step);

// Training split prepared once for all stages.
struct TrainingData {
  Vocabulary vocab;
  std::vector<CaptionRecord> records;              // training images
  std::vector<Image> images;                       // parallel to records, empty without raw images
  std::vector<CaptionExample> examples;            // one per caption
  std::vector<std::vector<Sentence>> references;   // per record, ids without BOS/EOS
  DocFreqStats doc_freq;                           // over `references`

  static TrainingData build(std::vector<CaptionRecord> train_records, Vocabulary vocab, std::size_t max_len,
                            std::vector<Image> images = {}, std::vector<std::string>* warnings = nullptr);
  bool has_images() const { return !images.empty(); }
};

enum class FeatureMode {
  kCache,  // frozen stages read the feature cache
  kLive,   // frozen stages recompute backbone features every step
};

struct StageLogLine {
  int stage = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double reward_mean = 0.0;

  nlohmann::json to_json() const;
};

struct StageReport {
  int stage = 0;
  std::size_t steps = 0;
  std::vector<double> step_loss;    // per update: per-token XE or SCST loss
  std::vector<double> step_reward;  // per update: mean sampled reward (SCST)
  std::vector<StageLogLine> epochs;
};

struct RunOptions {
  std::uint64_t seed = 1;
  FeatureMode feature_mode = FeatureMode::kCache;
  const FeatureCache* cache = nullptr;
  // Per-epoch checkpoints go here when set. Unless `keep_epoch_checkpoints`,
  // each one replaces the previous epoch's file.
  std::optional<std::filesystem::path> checkpoint_dir;
  bool keep_epoch_checkpoints = false;
  // Extra metadata merged into checkpoint headers.
  nlohmann::json checkpoint_meta = nlohmann::json::object();
  std::ostream* log = nullptr;  // JSONL, one line per epoch (and per step if log_steps)
  bool log_steps = false;
  std::size_t max_steps = 0;  // 0 = no cap
  // Called after every update with (step, loss, reward).
  std::function<void(std::size_t, double, double)> on_step;
};

// Highest stage completed so far, carried in checkpoint metadata.
struct TrainingProgress {
  int completed_stage = 0;
};

// Runs one stage in place on `model`. Throws StageOrderError when earlier
// stages have not been completed and ConfigError when a frozen stage has no
// feature source.
StageReport run_stage(const TrainingStageConfig& stage, Model& model, const TrainingData& data,
                      const RunOptions& options, TrainingProgress& progress);

// Features of every training record from the model's current backbone.
std::vector<VisualFeatures> compute_features(const Model& model, const TrainingData& data);

// Average XE per token of the training captions.
double evaluate_xe(const Model& model, const TrainingData& data, const FeatureCache* cache = nullptr);

// Fraction of training images whose greedy caption equals one of its
// references exactly.
double greedy_exact_match(const Model& model, const TrainingData& data, const FeatureCache* cache = nullptr);

// Gradients of the XE objective (per-token mean over `examples`) written to
// Parameter::grad of `params`; returns the loss.
double xe_gradients(const Model& model, const TrainingData& data, std::span<const std::size_t> examples,
                    const std::vector<Parameter*>& params, bool backbone_frozen, const FeatureCache* cache,
                    FeatureMode mode);

}  // namespace xpn

#endif  // XPN_TRAINING_HPP_
