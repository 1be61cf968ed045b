// src/training.cpp

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

#include "xpn/training.hpp"

#include <algorithm>
#include <cmath>

#include "xpn/decoding.hpp"
#include "xpn/parallel.hpp"

namespace xpn {

namespace {

const char* loss_name(LossKind k) { return k == LossKind::kXe ? "xe" : "scst"; }

LossKind parse_loss(const std::string& s) {
  if (s == "xe") return LossKind::kXe;
  if (s == "scst") return LossKind::kScst;
  throw ConfigError("unknown loss '" + s + "' (expected xe or scst)");
}

// Generated ids between BOS and the first EOS.
Sentence strip_special(std::span<const int> tokens) {
  Sentence s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i == 0 && tokens[i] == kBosId) continue;
    if (tokens[i] == kEosId) break;
    s.push_back(tokens[i]);
  }
  return s;
}

// Where the encoder input for a training record comes from.
class FeatureProvider {
 public:
  FeatureProvider(const Model& model, const TrainingData& data, const FeatureCache* cache, FeatureMode mode,
                  bool frozen)
      : model_(model), data_(data), cache_(cache), mode_(mode), frozen_(frozen) {}

  void check() const {
    if (frozen_ && mode_ == FeatureMode::kCache) {
      if (!cache_) throw ConfigError("frozen-backbone stage needs a feature cache (run cache-features first)");
      for (const auto& r : data_.records)
        if (!cache_->contains(r.id)) throw ConfigError("feature cache has no entry for training image '" + r.id + "'");
    } else if (frozen_ || model_.has_backbone()) {
      if (!model_.has_backbone() || !data_.has_images())
        throw ConfigError("backbone features need raw images and a model with a toy backbone");
    } else if (!cache_) {
      throw ConfigError("model has no backbone; a feature cache with external features is required");
    }
  }

  Var features(Tape& tape, std::size_t i) const {
    const std::string& id = data_.records[i].id;
    if (frozen_ && mode_ == FeatureMode::kCache) return tape.constant(cache_->read(id).to_tensor());
    if (frozen_) return tape.constant(model_.extract_features(data_.images[i], id).to_tensor());
    if (model_.has_backbone())
      return model_.backbone(tape, tape.constant(toy_backbone_pool(data_.images[i], model_.config().toy_patch)));
    return tape.constant(cache_->read(id).to_tensor());
  }

 private:
  const Model& model_;
  const TrainingData& data_;
  const FeatureCache* cache_;
  FeatureMode mode_;
  bool frozen_;
};

using GradSet = std::vector<std::optional<Tensor>>;

GradSet collect(const Tape& tape, const std::vector<Parameter*>& params) {
  GradSet g(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
    if (const Tensor* t = tape.param_grad(*params[p])) g[p] = *t;
  return g;
}

// Sums per-sample gradients in sample order, then scales.
void reduce_into(const std::vector<Parameter*>& params, const std::vector<GradSet>& grads, double factor) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& dst = params[p]->grad;
    dst.fill(0.0);
    for (const auto& g : grads)
      if (g[p])
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (*g[p])[i];
    for (auto& v : dst.data()) v *= factor;
  }
}

struct ScstResult {
  double loss = 0.0;
  double reward = 0.0;
};

ScstResult scst_gradients(const Model& model, const TrainingData& data, std::span<const std::size_t> images,
                          const std::vector<Parameter*>& params, const FeatureProvider& provider,
                          const TrainingStageConfig& stage, std::mt19937_64& rng) {
  const std::size_t B = images.size(), k = stage.scst_samples;
  std::vector<std::uint64_t> seeds(B);
  for (auto& s : seeds) s = rng();
  std::vector<GradSet> grads(B);
  std::vector<double> losses(B, 0.0), rewards(B, 0.0);
  const std::size_t max_len = model.config().max_caption_len;
  parallel_for(B, [&](std::size_t b) {
    const std::size_t i = images[b];
    Tape tape;
    Var enc = model.encode(tape, provider.features(tape, i));
    ModelStepper stepper(model, enc.value());
    std::mt19937_64 r(seeds[b]);
    const auto samples = sample_k(stepper, k, r, max_len, stage.sample_temperature);
    std::vector<double> rw(k);
    for (std::size_t j = 0; j < k; ++j)
      rw[j] = cider_d(strip_special(samples[j].tokens), data.references[i], data.doc_freq);
    const auto base = baseline_mean_of_others(rw);
    double mean = 0.0;
    for (double v : rw) mean += v;
    rewards[b] = mean / static_cast<double>(k);
    bool any = false;
    for (std::size_t j = 0; j < k; ++j) any = any || rw[j] != base[j];
    if (!any) {
      grads[b] = GradSet(params.size());
      return;
    }
    std::vector<Var> seq;
    for (const auto& s : samples) {
      std::span<const int> toks(s.tokens);
      Var lp = log_softmax_rows(model.decode_train(tape, toks.first(toks.size() - 1), enc));
      std::vector<std::size_t> rows(toks.size() - 1), cols(toks.size() - 1);
      for (std::size_t t = 0; t + 1 < toks.size(); ++t) {
        rows[t] = t;
        cols[t] = static_cast<std::size_t>(toks[t + 1]);
      }
      seq.push_back(sum(pick(lp, rows, cols)));
    }
    Var loss = scst_loss(seq, rw, base);
    tape.backward(loss);
    losses[b] = loss.value()[0];
    grads[b] = collect(tape, params);
  });
  reduce_into(params, grads, 1.0 / static_cast<double>(B));
  ScstResult out;
  for (std::size_t b = 0; b < B; ++b) {
    out.loss += losses[b];
    out.reward += rewards[b];
  }
  out.loss /= static_cast<double>(B);
  out.reward /= static_cast<double>(B);
  return out;
}

}  // namespace

TrainingStageConfig TrainingStageConfig::paper(int stage) {
  TrainingStageConfig c;
  c.stage = stage;
  c.batch_size = 48;
  switch (stage) {
    case 1:
      c.loss = LossKind::kXe;
      c.backbone_frozen = true;
      c.initial_lr = 2e-4;
      c.warmup_steps = 10000;
      c.anneal_factor = 0.8;
      c.anneal_every_epochs = 2;
      c.num_epochs = 8;
      break;
    case 2:
      c.loss = LossKind::kXe;
      c.backbone_frozen = false;
      c.initial_lr = 3e-5;
      c.anneal_factor = 0.55;
      c.anneal_every_epochs = 1;
      c.num_epochs = 2;
      break;
    case 3:
      c.loss = LossKind::kScst;
      c.backbone_frozen = true;
      c.initial_lr = 1e-4;
      c.anneal_factor = 0.8;
      c.anneal_every_epochs = 1;
      c.num_epochs = 9;
      break;
    case 4:
      c.loss = LossKind::kScst;
      c.backbone_frozen = false;
      c.initial_lr = 2e-6;
      c.fixed_lr = true;
      c.num_epochs = 1;
      break;
    default:
      throw ConfigError("stage must be 1, 2, 3 or 4, got " + std::to_string(stage));
  }
  return c;
}

TrainingStageConfig TrainingStageConfig::desk(int stage) {
  TrainingStageConfig c = paper(stage);
  c.batch_size = 10;
  switch (stage) {
    case 1:
      c.initial_lr = 2e-3;
      c.warmup_steps = 30;
      c.anneal_every_epochs = 40;
      c.num_epochs = 200;
      break;
    case 2:
      c.initial_lr = 1e-4;
      c.anneal_every_epochs = 10;
      c.num_epochs = 20;
      break;
    case 3:
      c.initial_lr = 1e-4;
      c.anneal_every_epochs = 10;
      c.num_epochs = 20;
      break;
    case 4:
      c.initial_lr = 1e-5;
      break;
  }
  return c;
}

TrainingStageConfig TrainingStageConfig::preset(const std::string& name, int stage) {
  if (name == "paper") return paper(stage);
  if (name == "desk") return desk(stage);
  throw ConfigError("unknown training preset '" + name + "' (expected paper or desk)");
}

void TrainingStageConfig::validate() const {
  if (stage < 1 || stage > 4) throw ConfigError("stage must be 1, 2, 3 or 4");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
  if (!(anneal_factor > 0.0)) throw ConfigError("anneal_factor must be positive");
  if (anneal_every_epochs == 0) throw ConfigError("anneal_every_epochs must be positive");
  if (num_epochs == 0) throw ConfigError("num_epochs must be positive");
  if (!(epoch_fraction > 0.0 && epoch_fraction <= 1.0)) throw ConfigError("epoch_fraction must be in (0, 1]");
  if (loss == LossKind::kScst && scst_samples < 2) throw ConfigError("SCST needs at least two samples per image");
  if (sample_temperature < 0.0) throw ConfigError("sample_temperature must be >= 0");
}

nlohmann::json TrainingStageConfig::to_json() const {
  return {{"stage", stage},
          {"loss", loss_name(loss)},
          {"backbone_frozen", backbone_frozen},
          {"batch_size", batch_size},
          {"initial_lr", initial_lr},
          {"warmup_steps", warmup_steps},
          {"anneal_factor", anneal_factor},
          {"anneal_every_epochs", anneal_every_epochs},
          {"num_epochs", num_epochs},
          {"fixed_lr", fixed_lr},
          {"epoch_fraction", epoch_fraction},
          {"scst_samples", scst_samples},
          {"sample_temperature", sample_temperature}};
}

TrainingStageConfig TrainingStageConfig::from_json(const nlohmann::json& j, const TrainingStageConfig& base) {
  TrainingStageConfig c = base;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("stage", c.stage);
    if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
    get("backbone_frozen", c.backbone_frozen);
    get("batch_size", c.batch_size);
    get("initial_lr", c.initial_lr);
    get("warmup_steps", c.warmup_steps);
    get("anneal_factor", c.anneal_factor);
    get("anneal_every_epochs", c.anneal_every_epochs);
    get("num_epochs", c.num_epochs);
    get("fixed_lr", c.fixed_lr);
    get("epoch_fraction", c.epoch_fraction);
    get("scst_samples", c.scst_samples);
    get("sample_temperature", c.sample_temperature);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stage config: ") + e.what());
  }
  c.validate();
  return c;
}

double lr_at(const TrainingStageConfig& s, std::size_t epoch, std::size_t step) {
  if (s.fixed_lr) return s.initial_lr;
  if (step < s.warmup_steps)
    return s.initial_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  return s.initial_lr * std::pow(s.anneal_factor, static_cast<double>(epoch / s.anneal_every_epochs));
}

TrainingData TrainingData::build(std::vector<CaptionRecord> train_records, Vocabulary vocab, std::size_t max_len,
                                 std::vector<Image> images, std::vector<std::string>* warnings) {
  if (train_records.empty()) throw ConfigError("training data: no training records");
  if (!images.empty() && images.size() != train_records.size())
    throw DimensionError("training data: image count differs from record count");
  TrainingData d;
  d.vocab = std::move(vocab);
  d.records = std::move(train_records);
  d.images = std::move(images);
  std::vector<const CaptionRecord*> ptrs;
  for (const auto& r : d.records) ptrs.push_back(&r);
  d.examples = encode_examples(ptrs, d.vocab, max_len, warnings);
  if (d.examples.empty()) throw ConfigError("training data: no usable captions");
  d.references.resize(d.records.size());
  for (const auto& e : d.examples) d.references[e.record].push_back(strip_special(e.tokens));
  for (std::size_t i = 0; i < d.records.size(); ++i)
    if (d.references[i].empty()) throw ConfigError("training image '" + d.records[i].id + "' has no usable caption");
  d.doc_freq = compute_doc_freq(d.references);
  return d;
}

nlohmann::json StageLogLine::to_json() const {
  return {{"stage", stage}, {"epoch", epoch}, {"step", step}, {"lr", lr}, {"loss", loss}, {"reward_mean", reward_mean}};
}

double xe_gradients(const Model& model, const TrainingData& data, std::span<const std::size_t> examples,
                    const std::vector<Parameter*>& params, bool backbone_frozen, const FeatureCache* cache,
                    FeatureMode mode) {
  const FeatureProvider provider(model, data, cache, mode, backbone_frozen);
  const std::size_t B = examples.size();
  std::vector<GradSet> grads(B);
  std::vector<double> losses(B);
  std::vector<std::size_t> tokens(B);
  parallel_for(B, [&](std::size_t b) {
    const CaptionExample& ex = data.examples[examples[b]];
    std::span<const int> seq(ex.tokens);
    Tape tape;
    Var enc = model.encode(tape, provider.features(tape, ex.record));
    Var loss = xe_loss(model.decode_train(tape, seq.first(seq.size() - 1), enc), seq.subspan(1));
    tape.backward(loss);
    losses[b] = loss.value()[0];
    tokens[b] = seq.size() - 1;
    grads[b] = collect(tape, params);
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < B; ++b) {
    total += losses[b];
    n += tokens[b];
  }
  reduce_into(params, grads, 1.0 / static_cast<double>(n));
  return total / static_cast<double>(n);
}

StageReport run_stage(const TrainingStageConfig& stage, Model& model, const TrainingData& data,
                      const RunOptions& options, TrainingProgress& progress) {
  stage.validate();
  if (progress.completed_stage < stage.stage - 1)
    throw StageOrderError("stage " + std::to_string(stage.stage) + " requires stage " +
                          std::to_string(stage.stage - 1) + " to be completed first (completed: " +
                          std::to_string(progress.completed_stage) + ")");
  const FeatureProvider provider(model, data, options.cache, options.feature_mode, stage.backbone_frozen);
  provider.check();

  const auto params = model.trainable_parameters(stage.backbone_frozen);
  RAdamState opt;
  std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(stage.stage));
  const bool xe = stage.loss == LossKind::kXe;
  const std::size_t n_items = xe ? data.examples.size() : data.records.size();
  const std::size_t per_epoch = (n_items + stage.batch_size - 1) / stage.batch_size;
  const std::size_t limit = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(static_cast<double>(per_epoch) * stage.epoch_fraction)));

  StageReport report;
  report.stage = stage.stage;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < stage.num_epochs && !stop; ++epoch) {
    const auto batches = shuffled_batches(n_items, stage.batch_size, rng());
    double epoch_loss = 0.0, epoch_reward = 0.0, lr = 0.0;
    std::size_t n = 0;
    for (std::size_t bi = 0; bi < std::min(limit, batches.size()); ++bi) {
      const std::size_t step = report.steps + 1;
      lr = lr_at(stage, epoch, step);
      double loss = 0.0, reward = 0.0;
      if (xe) {
        loss = xe_gradients(model, data, batches[bi], params, stage.backbone_frozen, options.cache,
                            options.feature_mode);
      } else {
        const auto r = scst_gradients(model, data, batches[bi], params, provider, stage, rng);
        loss = r.loss;
        reward = r.reward;
      }
      radam_step(params, opt, lr);
      report.steps = step;
      report.step_loss.push_back(loss);
      report.step_reward.push_back(reward);
      epoch_loss += loss;
      epoch_reward += reward;
      ++n;
      if (options.on_step) options.on_step(step, loss, reward);
      if (options.log && options.log_steps)
        *options.log << StageLogLine{stage.stage, epoch, step, lr, loss, reward}.to_json().dump() << '\n';
      if (options.max_steps && step >= options.max_steps) {
        stop = true;
        break;
      }
    }
    StageLogLine line{stage.stage, epoch, report.steps, lr, epoch_loss / static_cast<double>(n),
                      epoch_reward / static_cast<double>(n)};
    report.epochs.push_back(line);
    if (options.log) *options.log << line.to_json().dump() << std::endl;
    if (options.checkpoint_dir) {
      nlohmann::json meta = options.checkpoint_meta;
      meta["completed_stage"] = progress.completed_stage;
      meta["stage"] = stage.stage;
      meta["epoch"] = epoch;
      auto epoch_path = [&](std::size_t e) {
        return *options.checkpoint_dir / ("stage" + std::to_string(stage.stage) + "_epoch" + std::to_string(e) + ".ckpt");
      };
      save_checkpoint(epoch_path(epoch), model, meta);
      if (!options.keep_epoch_checkpoints && epoch > 0) std::filesystem::remove(epoch_path(epoch - 1));
    }
  }
  progress.completed_stage = std::max(progress.completed_stage, stage.stage);
  if (options.checkpoint_dir) {
    nlohmann::json meta = options.checkpoint_meta;
    meta["completed_stage"] = progress.completed_stage;
    save_checkpoint(*options.checkpoint_dir / ("stage" + std::to_string(stage.stage) + ".ckpt"), model, meta);
  }
  return report;
}

std::vector<VisualFeatures> compute_features(const Model& model, const TrainingData& data) {
  if (!model.has_backbone() || !data.has_images())
    throw ConfigError("computing features needs raw images and a model with a toy backbone");
  std::vector<VisualFeatures> out(data.records.size());
  parallel_for(out.size(), [&](std::size_t i) { out[i] = model.extract_features(data.images[i], data.records[i].id); });
  return out;
}

double evaluate_xe(const Model& model, const TrainingData& data, const FeatureCache* cache) {
  const FeatureProvider provider(model, data, cache, cache ? FeatureMode::kCache : FeatureMode::kLive, true);
  provider.check();
  std::vector<double> losses(data.examples.size());
  std::vector<std::size_t> tokens(data.examples.size());
  parallel_for(data.examples.size(), [&](std::size_t b) {
    const auto& ex = data.examples[b];
    std::span<const int> seq(ex.tokens);
    Tape tape(false);
    Var enc = model.encode(tape, provider.features(tape, ex.record));
    losses[b] = xe_loss(model.decode_train(tape, seq.first(seq.size() - 1), enc), seq.subspan(1)).value()[0];
    tokens[b] = seq.size() - 1;
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < losses.size(); ++b) {
    total += losses[b];
    n += tokens[b];
  }
  return total / static_cast<double>(n);
}

double greedy_exact_match(const Model& model, const TrainingData& data, const FeatureCache* cache) {
  const FeatureProvider provider(model, data, cache, cache ? FeatureMode::kCache : FeatureMode::kLive, true);
  provider.check();
  std::vector<int> hit(data.records.size(), 0);
  parallel_for(data.records.size(), [&](std::size_t i) {
    Tape tape(false);
    ModelStepper stepper(model, model.encode(tape, provider.features(tape, i)).value());
    const Sentence out = strip_special(greedy(stepper, model.config().max_caption_len).tokens);
    const auto& refs = data.references[i];
    hit[i] = std::find(refs.begin(), refs.end(), out) != refs.end() ? 1 : 0;
  });
  double n = 0;
  for (int h : hit) n += h;
  return n / static_cast<double>(hit.size());
}

}  // namespace xpn
