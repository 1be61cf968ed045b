// tools/main.cpp

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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "checks.hpp"
#include "run_config.hpp"
#include "xpn/decoding.hpp"
#include "xpn/parallel.hpp"
#include "xpn/toy.hpp"
#include "xpn/training.hpp"

namespace fs = std::filesystem;
using namespace xpn;
using nlohmann::json;

namespace {

bool is_image(const std::string& p) { return fs::path(p).extension() == ".ppm"; }
bool is_feature_json(const std::string& p) { return fs::path(p).extension() == ".json"; }

Vocabulary vocab_from_meta(const json& meta) {
  if (!meta.contains("vocab")) throw FormatError("checkpoint metadata has no vocabulary");
  return Vocabulary(meta.at("vocab").get<std::vector<std::string>>(), meta.value("min_count", std::size_t{0}));
}

Sentence strip(const std::vector<int>& tokens) {
  Sentence s;
  for (int t : tokens) {
    if (t == kBosId) continue;
    if (t == kEosId) break;
    s.push_back(t);
  }
  return s;
}

// Encoder input for one record: the feature cache when it holds the id,
// otherwise the record's own image or feature file.
VisualFeatures record_features(const Model& model, const CaptionRecord& r, const fs::path& base_dir,
                               const FeatureCache* cache) {
  if (cache && cache->contains(r.id)) return cache->read(r.id);
  if (is_image(r.features)) {
    if (!model.has_backbone()) throw ConfigError("record '" + r.id + "' is an image but the model has no toy backbone");
    return model.extract_features(read_ppm(base_dir / r.features), r.id);
  }
  if (is_feature_json(r.features)) return read_feature_json(base_dir / r.features, r.id);
  throw NotFoundError("no features for record '" + r.id + "' (not in the cache, not a .ppm or .json file)");
}

std::vector<Hypothesis> run_decoder(const Model& model, const VisualFeatures& f, std::size_t beam, bool use_greedy,
                                    std::size_t max_len) {
  ModelStepper stepper(model, model.encode_features(f));
  if (use_greedy) return {greedy(stepper, max_len)};
  auto hyps = beam_search(stepper, beam, max_len);
  if (hyps.size() > beam) hyps.resize(beam);
  return hyps;
}

std::ofstream open_log(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::app);
  if (!os) throw Error("cannot open log " + path.string());
  return os;
}

// ---------------------------------------------------------------- commands

int cmd_make_toy(const fs::path& out, std::size_t train, std::size_t test, std::uint64_t seed) {
  const auto toy = make_toy_dataset(train, test, 8, seed);
  write_toy_dataset(out, toy);
  json config = {{"model", "desk"},  {"training", "desk"},          {"data", "dataset.jsonl"},
                 {"vocab", "vocab.txt"}, {"cache", "features.bin"}, {"checkpoint_dir", "checkpoints"},
                 {"seed", 1},       {"min_count", 1}};
  std::ofstream(out / "config.json") << config.dump(2) << '\n';
  std::cerr << "wrote " << toy.records.size() << " records to " << (out / "dataset.jsonl").string() << '\n';
  std::cout << json{{"dataset", (out / "dataset.jsonl").string()}, {"config", (out / "config.json").string()},
                    {"records", toy.records.size()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_build_vocab(const fs::path& data, std::size_t min_count, const fs::path& out) {
  const auto records = load_dataset(data);
  const Vocabulary v = build_vocab(records, min_count);
  v.save(out);
  std::cerr << "vocabulary: " << v.size() << " entries (min count " << min_count << ")\n";
  std::cout << json{{"vocab", out.string()}, {"size", v.size()}}.dump() << '\n';
  return 0;
}

int cmd_cache_features(const fs::path& data, const fs::path& out, const std::string& ckpt,
                       const std::string& model_preset) {
  const auto records = load_dataset(data);
  const fs::path base = data.parent_path();
  std::size_t images = 0;
  for (const auto& r : records) images += is_image(r.features);
  std::vector<VisualFeatures> feats(records.size());
  if (images == records.size()) {
    Model model;
    if (!ckpt.empty()) {
      model = load_checkpoint(ckpt);
    } else {
      ModelConfig c = ModelConfig::preset(model_preset);
      c.vocab_size = kNumReserved + 1;
      model = Model(c, 1);
    }
    if (!model.has_backbone()) throw ConfigError("the model has no toy backbone to run over images");
    parallel_for(records.size(), [&](std::size_t i) {
      feats[i] = model.extract_features(read_ppm(base / records[i].features), records[i].id);
    });
  } else if (images == 0) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!is_feature_json(records[i].features))
        throw FormatError("record '" + records[i].id + "': features must be a .ppm image or a .json matrix");
      feats[i] = read_feature_json(base / records[i].features, records[i].id);
    }
  } else {
    throw FormatError("dataset mixes images and external feature files");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  feature_cache_write(feats, out);
  std::cerr << "cached features for " << feats.size() << " records\n";
  std::cout << json{{"cache", out.string()}, {"records", feats.size()}}.dump() << '\n';
  return 0;
}

int cmd_train(const fs::path& config_path, const std::string& stage_arg, const std::string& resume,
              std::optional<std::uint64_t> seed) {
  cli::RunConfig cfg = cli::RunConfig::load(config_path);
  if (seed) cfg.seed = *seed;
  std::vector<int> stages;
  if (stage_arg != "all") {
    int k = 0;
    try {
      k = std::stoi(stage_arg);
    } catch (const std::exception&) {
    }
    if (k < 1 || k > 4 || std::to_string(k) != stage_arg)
      throw ConfigError("--stage must be 1, 2, 3, 4 or all, got '" + stage_arg + "'");
    stages.push_back(k);
  }

  const auto all = load_dataset(cfg.data);
  std::vector<CaptionRecord> train;
  for (const auto* r : select_split(all, Split::kTrain)) train.push_back(*r);
  if (train.empty()) throw ConfigError("dataset has no train split records");

  json meta;
  Model model;
  Vocabulary vocab;
  TrainingProgress progress;
  if (!resume.empty()) {
    model = load_checkpoint(resume, &meta);
    vocab = vocab_from_meta(meta);
    progress.completed_stage = meta.value("completed_stage", 0);
    std::cerr << "resumed " << resume << " (completed stage " << progress.completed_stage << ")\n";
  } else {
    if (fs::exists(cfg.vocab)) {
      vocab = Vocabulary::load(cfg.vocab, cfg.min_count);
    } else {
      vocab = build_vocab(train, cfg.min_count);
      if (cfg.vocab.has_parent_path()) fs::create_directories(cfg.vocab.parent_path());
      vocab.save(cfg.vocab);
      std::cerr << "built vocabulary of " << vocab.size() << " entries at " << cfg.vocab.string() << '\n';
    }
    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    model = Model(mc, cfg.seed);
  }
  if (stages.empty())
    for (int k = progress.completed_stage + 1; k <= (cfg.skip_stage4 ? 3 : 4); ++k) stages.push_back(k);
  if (stages.empty()) {
    std::cerr << "nothing to do: every stage is complete\n";
    return 0;
  }

  std::vector<Image> images;
  std::size_t n_images = 0;
  for (const auto& r : train) n_images += is_image(r.features);
  if (n_images == train.size()) images = load_record_images(train, cfg.data.parent_path());
  else if (n_images != 0) throw FormatError("dataset mixes images and external feature files");
  if (model.has_backbone() && images.empty())
    throw ConfigError("the model has a toy backbone but the training records are not images");

  std::vector<std::string> warnings;
  const TrainingData data =
      TrainingData::build(std::move(train), vocab, model.config().max_caption_len, std::move(images), &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  fs::create_directories(cfg.checkpoint_dir);
  std::ofstream log = open_log(cfg.log);
  json ckpt_meta = {{"vocab", vocab.regular_tokens()}, {"min_count", vocab.min_count()}, {"seed", cfg.seed}};
  json summary = json::array();
  for (int k : stages) {
    const TrainingStageConfig sc = cfg.stage(k);
    std::optional<FeatureCache> cache;
    if (sc.backbone_frozen && cfg.feature_mode == FeatureMode::kCache && model.has_backbone() &&
        progress.completed_stage >= k - 1) {
      // the backbone may have moved in an end-to-end stage; refresh once
      feature_cache_write(compute_features(model, data), cfg.cache);
      std::cerr << "stage " << k << ": cached backbone features at " << cfg.cache.string() << '\n';
    }
    if (fs::exists(cfg.cache)) cache.emplace(cfg.cache);
    RunOptions opts;
    opts.seed = cfg.seed;
    opts.feature_mode = cfg.feature_mode;
    opts.cache = cache ? &*cache : nullptr;
    opts.checkpoint_dir = cfg.checkpoint_dir;
    opts.keep_epoch_checkpoints = cfg.keep_epoch_checkpoints;
    opts.checkpoint_meta = ckpt_meta;
    opts.log = &log;
    const auto report = run_stage(sc, model, data, opts, progress);
    const auto& last = report.epochs.back();
    std::cerr << "stage " << k << ": " << report.steps << " steps, last epoch loss " << last.loss;
    if (sc.loss == LossKind::kScst) std::cerr << ", mean reward " << last.reward_mean;
    std::cerr << '\n';
    summary.push_back({{"stage", k},
                       {"steps", report.steps},
                       {"loss", last.loss},
                       {"reward_mean", last.reward_mean},
                       {"checkpoint", (cfg.checkpoint_dir / ("stage" + std::to_string(k) + ".ckpt")).string()}});
  }
  std::cout << json{{"completed_stage", progress.completed_stage}, {"stages", summary}}.dump() << '\n';
  return 0;
}

int cmd_caption(const fs::path& ckpt, const fs::path& features, const std::string& id, std::size_t beam,
                bool use_greedy, bool as_json) {
  json meta;
  const Model model = load_checkpoint(ckpt, &meta);
  const Vocabulary vocab = vocab_from_meta(meta);
  VisualFeatures f;
  if (is_image(features.string())) {
    if (!model.has_backbone()) throw ConfigError("the model has no toy backbone to run over images");
    f = model.extract_features(read_ppm(features), id.empty() ? features.stem().string() : id);
  } else if (is_feature_json(features.string())) {
    f = read_feature_json(features, id);
  } else {
    if (id.empty()) throw ConfigError("--id is required when --features is a feature cache");
    f = feature_cache_read(features, id);
  }
  if (beam == 0) throw ConfigError("--beam must be at least 1");
  const auto hyps = run_decoder(model, f, beam, use_greedy, model.config().max_caption_len);
  if (as_json) {
    json out = json::array();
    for (const auto& h : hyps)
      out.push_back({{"caption", join_tokens(decode_tokens(strip(h.tokens), vocab))},
                     {"log_prob", h.log_prob},
                     {"mean_log_prob", h.mean_log_prob()},
                     {"forced", h.forced}});
    std::cout << json{{"id", f.id}, {"captions", out}}.dump() << '\n';
  } else {
    std::cout << join_tokens(decode_tokens(strip(hyps.front().tokens), vocab)) << '\n';
  }
  return 0;
}

int cmd_evaluate(const fs::path& ckpt, const fs::path& data, const std::string& split, std::size_t beam,
                 const std::string& cache_path, const std::string& out_path, bool as_json) {
  json meta;
  const Model model = load_checkpoint(ckpt, &meta);
  const Vocabulary vocab = vocab_from_meta(meta);
  const auto all = load_dataset(data);
  const auto records = select_split(all, parse_split(split));
  if (records.empty()) throw ConfigError("dataset has no '" + split + "' records");
  if (beam == 0) throw ConfigError("--beam must be at least 1");
  std::optional<FeatureCache> cache;
  if (!cache_path.empty()) cache.emplace(cache_path);
  const std::size_t max_len = model.config().max_caption_len;
  std::vector<Sentence> cands(records.size());
  std::vector<std::vector<Sentence>> refs(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    for (const auto& c : records[i]->captions) {
      const auto toks = preprocess_caption(c);
      if (toks.empty()) continue;
      Sentence s;
      for (const auto& t : toks) s.push_back(vocab.id(t));
      refs[i].push_back(std::move(s));
    }
  parallel_for(records.size(), [&](std::size_t i) {
    const auto f = record_features(model, *records[i], data.parent_path(), cache ? &*cache : nullptr);
    cands[i] = strip(run_decoder(model, f, beam, false, max_len).front().tokens);
  });
  const MetricReport m = evaluate_captions(cands, refs);
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw Error("cannot write " + out_path);
    for (std::size_t i = 0; i < records.size(); ++i)
      os << json{{"id", records[i]->id}, {"caption", join_tokens(decode_tokens(cands[i], vocab))}}.dump() << '\n';
  }
  if (as_json) {
    std::cout << json{{"split", split},  {"images", m.images}, {"beam", beam}, {"cider_d", m.cider},
                      {"bleu1", m.bleu[0]}, {"bleu2", m.bleu[1]}, {"bleu3", m.bleu[2]}, {"bleu4", m.bleu[3]}}
                     .dump()
              << '\n';
  } else {
    std::printf("split    %s (%zu images, beam %zu)\n", split.c_str(), m.images, beam);
    std::printf("CIDEr-D  %.4f\n", m.cider);
    for (int n = 0; n < 4; ++n) std::printf("BLEU-%d   %.4f\n", n + 1, m.bleu[static_cast<std::size_t>(n)]);
  }
  return 0;
}

int cmd_selftest(bool full, bool as_json) {
  const auto results = checks::run_checks(full);
  bool ok = true;
  json out = json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    out.push_back(r.to_json());
    if (!as_json)
      std::printf("%-4s %2d  %-26s %s\n", r.passed ? "ok" : "FAIL", r.id, r.name.c_str(), r.detail.c_str());
  }
  if (as_json) std::cout << json{{"passed", ok}, {"checks", out}}.dump() << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expansion-mechanism image captioning: training, captioning and evaluation"};
  app.require_subcommand(1);

  fs::path toy_out;
  std::size_t toy_train = 30, toy_test = 0;
  std::uint64_t toy_seed = 7;
  auto* make_toy = app.add_subcommand("make-toy", "Write the synthetic toy data set and a starter config");
  make_toy->add_option("--out", toy_out, "Output directory")->required();
  make_toy->add_option("--train", toy_train, "Training images");
  make_toy->add_option("--test", toy_test, "Test images");
  make_toy->add_option("--seed", toy_seed, "Background noise seed");

  fs::path data, out;
  std::size_t min_count = 5;
  auto* build = app.add_subcommand("build-vocab", "Build the vocabulary from the train split");
  build->add_option("--data", data, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
  build->add_option("--min-count", min_count, "Minimum token count");
  build->add_option("--out", out, "Vocabulary file")->required();

  std::string ckpt_opt, model_preset = "desk";
  auto* cache = app.add_subcommand("cache-features", "Run the toy backbone (or ingest feature files) into a cache");
  cache->add_option("--data", data, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
  cache->add_option("--out", out, "Feature cache file")->required();
  cache->add_option("--ckpt", ckpt_opt, "Checkpoint whose backbone to run")->check(CLI::ExistingFile);
  cache->add_option("--model", model_preset, "Model preset when no checkpoint is given");

  fs::path config;
  std::string stage = "all", resume;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "Run training stages");
  train->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--stage", stage, "1, 2, 3, 4 or all");
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");

  fs::path ckpt, features;
  std::string id;
  std::size_t beam = 5;
  bool use_greedy = false, as_json = false;
  auto* caption = app.add_subcommand("caption", "Caption one image");
  caption->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  caption->add_option("--features", features, "Feature cache, .json feature matrix or .ppm image")
      ->required()
      ->check(CLI::ExistingFile);
  caption->add_option("--id", id, "Image id inside the feature cache");
  caption->add_option("--beam", beam, "Beam size");
  caption->add_flag("--greedy", use_greedy, "Greedy decoding");
  caption->add_flag("--json", as_json, "JSON output with every beam");

  std::string split = "test", cache_path, out_path;
  std::size_t eval_beam = 3;
  auto* evaluate = app.add_subcommand("evaluate", "Caption a split and score it");
  evaluate->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "train, val or test");
  evaluate->add_option("--beam", eval_beam, "Beam size");
  evaluate->add_option("--cache", cache_path, "Feature cache")->check(CLI::ExistingFile);
  evaluate->add_option("--out", out_path, "Write generated captions (JSONL)");
  evaluate->add_flag("--json", as_json, "JSON output");

  bool full = false;
  auto* selftest = app.add_subcommand("selftest", "Run the built-in check suites");
  selftest->add_flag("--full", full, "Include the training checks");
  selftest->add_flag("--json", as_json, "JSON output");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*make_toy) return cmd_make_toy(toy_out, toy_train, toy_test, toy_seed);
    if (*build) return cmd_build_vocab(data, min_count, out);
    if (*cache) return cmd_cache_features(data, out, ckpt_opt, model_preset);
    if (*train) return cmd_train(config, stage, resume, seed);
    if (*caption) return cmd_caption(ckpt, features, id, beam, use_greedy, as_json);
    if (*evaluate) return cmd_evaluate(ckpt, data, split, eval_beam, cache_path, out_path, as_json);
    if (*selftest) return cmd_selftest(full, as_json);
  } catch (const StageOrderError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
