// tests/checks.cpp

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

#include "checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "metric_oracles.hpp"
#include "oracles.hpp"
#include "stub_models.hpp"
#include "test_util.hpp"
#include "xpn/blocks.hpp"
#include "xpn/expansion.hpp"
#include "xpn/grad_check.hpp"
#include "xpn/toy.hpp"
#include "xpn/training.hpp"

namespace xpn::checks {

namespace {

using testing::random_tensor;
using testing::weighted_sum;

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Tensor run_static(const StaticExpansionParams& p, const Tensor& x) {
  Tape t(false);
  return static_expansion_forward(t, p, t.constant(x)).value();
}

Tensor run_dynamic(const DynamicExpansionParams& p, const Tensor& x, bool causal) {
  Tape t(false);
  return dynamic_expansion_forward(t, p, t.constant(x), causal).value();
}

void randomize(std::vector<Parameter*> ps, std::mt19937_64& rng) {
  for (auto* p : ps) p->value = random_tensor(p->value.shape(), rng, -0.8, 0.8);
}

struct ToyRun {
  ToyDataset toy = make_toy_dataset();
  Vocabulary vocab = build_vocab(toy.records, 1);
  ModelConfig config = [this] {
    ModelConfig c = ModelConfig::desk();
    c.vocab_size = vocab.size();
    return c;
  }();
  TrainingData data = TrainingData::build(toy.records, vocab, config.max_caption_len, toy.images);
};

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "xpn_checks";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

nlohmann::json CheckResult::to_json() const {
  return {{"id", id}, {"name", name}, {"passed", passed}, {"detail", detail}, {"seconds", seconds}};
}

CheckResult gradient_suite() {
  CheckResult r{1, "gradient suite"};
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  const std::size_t d = 4, L = 5;
  Parameter x("x", random_tensor({L, d}, rng));
  Parameter enc("enc", random_tensor({3, d}, rng));
  const Tensor w = random_tensor({L, d}, rng);
  std::vector<std::pair<std::string, GradCheckReport>> reports;
  auto check = [&](const std::string& name, const LossBuilder& f, std::vector<Parameter*> ps) {
    reports.emplace_back(name, grad_check(f, ps, 1e-5, 1e-4));
  };

  {
    Parameter m("m", random_tensor({6, 7}, rng, 0.1, 2.0));
    const Tensor wm = random_tensor({6, 7}, rng);
    check("psi", [&](Tape& t) { return weighted_sum(psi_row_normalize(t.param(m), 1e-6), wm); }, {&m});
    const std::size_t blocks[] = {3, 4};
    check("psi blocks", [&](Tape& t) { return weighted_sum(psi_row_normalize(t.param(m), 1e-6, blocks), wm); },
          {&m});
  }
  auto static_case = [&](const std::string& name, std::vector<std::size_t> groups, BackwardNorm norm) {
    auto p = make_static_expansion("se", d, std::move(groups), rng);
    p.backward_norm = norm;
    auto ps = p.parameters();
    ps.push_back(&x);
    check(name, [&](Tape& t) { return weighted_sum(static_expansion_forward(t, p, t.param(x)), w); }, ps);
  };
  static_case("static expansion", {6}, BackwardNorm::kPerGroup);
  static_case("block static expansion", {2, 3, 5}, BackwardNorm::kPerGroup);
  static_case("block static expansion (joint)", {2, 3, 5}, BackwardNorm::kJoint);
  for (bool causal : {false, true}) {
    auto p = make_dynamic_expansion("de", d, 3, rng);
    auto ps = p.parameters();
    ps.push_back(&x);
    check(causal ? "dynamic expansion (causal)" : "dynamic expansion (non-causal)",
          [&](Tape& t) { return weighted_sum(dynamic_expansion_forward(t, p, t.param(x), causal), w); }, ps);
  }
  {
    auto p = make_cross_attention("ca", d, 2, rng);
    auto ps = p.parameters();
    ps.push_back(&x);
    ps.push_back(&enc);
    check("cross attention", [&](Tape& t) { return weighted_sum(cross_attention(t, p, t.param(x), t.param(enc)), w); },
          ps);
  }
  {
    auto p = make_feed_forward("ff", d, 8, rng);
    randomize(p.parameters(), rng);
    auto ps = p.parameters();
    ps.push_back(&x);
    check("feed forward", [&](Tape& t) { return weighted_sum(feed_forward(t, p, t.param(x)), w); }, ps);
  }
  {
    auto p = make_layer_norm("ln", d);
    randomize(p.parameters(), rng);
    auto ps = p.parameters();
    ps.push_back(&x);
    check("layer norm", [&](Tape& t) { return weighted_sum(layer_norm(t, p, t.param(x)), w); }, ps);
  }
  {
    ModelConfig c;
    c.d_model = 4;
    c.d_ff = 8;
    c.n_enc = 1;
    c.n_dec = 1;
    c.groups = {2, 3};
    c.dyn_expansion = 2;
    c.heads = 2;
    c.vocab_size = 11;
    c.max_caption_len = 8;
    c.feature_dim = 6;
    c.toy_patch = 2;
    Model m(c, 10);
    const Tensor pooled = random_tensor({3, 6}, rng);
    const std::vector<int> tokens = {kBosId, 5, 7, 4, 9};
    const std::vector<std::size_t> rows = {0, 1, 2, 3, 4}, cols = {5, 7, 4, 9, kEosId};
    check(
        "tiny model",
        [&](Tape& t) {
          Var e = m.encode(t, m.backbone(t, t.constant(pooled)));
          Var lp = log_softmax_rows(m.decode_train(t, tokens, e));
          return scale(sum(pick(lp, rows, cols)), -1.0);
        },
        m.parameters());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& [name, rep] : reports) {
    if (rep.max_error() >= worst) {
      worst = rep.max_error();
      worst_name = name;
    }
    if (!rep.passed) failed += (failed.empty() ? "" : ", ") + name;
  }
  r.passed = failed.empty() && r.seconds < 120.0;
  r.detail = std::to_string(reports.size()) + " components, worst rel err " + fmt("%.2e", worst) + " (" +
             worst_name + ")" + (failed.empty() ? "" : "; failed: " + failed);
  return r;
}

CheckResult shape_restoration() {
  CheckResult r{2, "shape restoration"};
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> len(1, 12), ng(1, 4), gl(1, 16), di(0, 2);
  const std::size_t dims[] = {2, 4, 8};
  std::size_t ok = 0, singleton = 0, ne_below = 0, ne_above = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dm = dims[di(rng)], L = len(rng);
    std::vector<std::size_t> g(trial % 4 == 0 ? 1 : ng(rng));
    for (auto& v : g) v = trial % 4 == 0 ? 1 : gl(rng);
    singleton += std::count(g.begin(), g.end(), std::size_t{1}) > 0;
    // alternate N_E below and above L
    std::size_t ne = gl(rng);
    if (trial % 2 == 0 && L > 1) ne = 1 + ne % (L - 1);
    if (trial % 2 == 1) ne = L + 1 + ne % 4;
    ne_below += ne < L;
    ne_above += ne > L;
    auto sp = make_static_expansion("se", dm, g, rng);
    auto dp = make_dynamic_expansion("de", dm, ne, rng);
    const Tensor x = random_tensor({L, dm}, rng);
    const Shape want{L, dm};
    ok += run_static(sp, x).shape() == want && run_dynamic(dp, x, true).shape() == want &&
          run_dynamic(dp, x, false).shape() == want;
  }
  r.passed = ok == 200 && singleton > 0 && ne_below > 0 && ne_above > 0;
  r.detail = std::to_string(ok) + "/200 configs (" + std::to_string(singleton) + " with singleton groups, N_E<L " +
             std::to_string(ne_below) + ", N_E>L " + std::to_string(ne_above) + ")";
  return r;
}

CheckResult causality() {
  CheckResult r{3, "causality"};
  std::mt19937_64 rng(303);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(2, 10), ne(1, 5);
  std::size_t layer_ok = 0, model_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = len(rng);
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, L - 2)(rng);
    auto p = make_dynamic_expansion("de", 4, ne(rng), rng);
    const Tensor x = random_tensor({L, 4}, rng);
    Tensor x2 = x;
    for (std::size_t i = t + 1; i < L; ++i)
      for (std::size_t j = 0; j < 4; ++j) x2.at(i, j) += noise(rng);
    const Tensor y = run_dynamic(p, x, true), y2 = run_dynamic(p, x2, true);
    bool same = true;
    for (std::size_t i = 0; i <= t; ++i)
      for (std::size_t j = 0; j < 4; ++j) same = same && y.at(i, j) == y2.at(i, j);
    layer_ok += same;
  }
  ModelConfig c = ModelConfig::desk();
  c.n_dec = 3;
  c.vocab_size = 12;
  c.toy_patch = 0;
  const Model model(c, 33);
  std::uniform_int_distribution<int> tok(kNumReserved, 11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t L = len(rng);
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, L - 2)(rng);
    std::vector<int> a(L), b;
    a[0] = kBosId;
    for (std::size_t i = 1; i < L; ++i) a[i] = tok(rng);
    b = a;
    for (std::size_t i = t + 1; i < L; ++i) b[i] = tok(rng);
    const Tensor feats = random_tensor({5, c.feature_dim}, rng);
    Tape ta(false), tb(false);
    const Tensor ya = model.decode_train(ta, a, model.encode(ta, ta.constant(feats))).value();
    const Tensor yb = model.decode_train(tb, b, model.encode(tb, tb.constant(feats))).value();
    bool same = true;
    for (std::size_t i = 0; i <= t; ++i)
      for (std::size_t j = 0; j < ya.cols(); ++j) same = same && ya.at(i, j) == yb.at(i, j);
    model_ok += same;
  }
  r.passed = layer_ok == 100 && model_ok == 100;
  r.detail = "dynamic layer " + std::to_string(layer_ok) + "/100, 3-layer decoder " + std::to_string(model_ok) +
             "/100 prefixes bitwise unchanged";
  return r;
}

CheckResult block_reduction() {
  CheckResult r{4, "block reduction"};
  std::mt19937_64 rng(404);
  double worst_single = 0.0, worst_copies = 0.0;
  for (std::size_t N : {1u, 3u, 8u})
    for (std::size_t L : {1u, 4u, 9u}) {
      auto p = make_static_expansion("se", 4, {N}, rng);
      const Tensor x = random_tensor({L, 4}, rng);
      const Tensor block = run_static(p, x);
      // plain static expansion: no grouping, one normalization over all rows
      const Tensor plain = oracle::expansion(
          {x, p.query.value, p.bias.value, p.w_key.value, p.w_value1.value, p.w_value2.value, p.w_select.value, {N},
           p.eps, 0});
      worst_single = std::max(worst_single, max_abs_diff(block, plain));
      for (std::size_t copies : {2u, 3u, 5u}) {
        std::mt19937_64 rng2(copies);
        auto multi = make_static_expansion("se", 4, std::vector<std::size_t>(copies, N), rng2);
        for (std::size_t k = 0; k < copies; ++k)
          for (std::size_t i = 0; i < N * 4; ++i) {
            multi.query.value[k * N * 4 + i] = p.query.value[i];
            multi.bias.value[k * N * 4 + i] = p.bias.value[i];
          }
        multi.w_key.value = p.w_key.value;
        multi.w_value1.value = p.w_value1.value;
        multi.w_value2.value = p.w_value2.value;
        multi.w_select.value = p.w_select.value;
        worst_copies = std::max(worst_copies, max_abs_diff(run_static(multi, x), block));
      }
    }
  r.passed = worst_single <= 1e-12 && worst_copies <= 1e-12;
  r.detail = fmt("G={N} vs static max diff %.1e; identical groups vs single %.1e", worst_single, worst_copies);
  return r;
}

CheckResult dynamic_query_oracle() {
  CheckResult r{5, "dynamic-query oracle"};
  std::mt19937_64 rng(505);
  std::size_t cases = 0, ok = 0;
  for (std::size_t L = 1; L <= 6; ++L)
    for (std::size_t ne = 1; ne <= 4; ++ne) {
      auto p = make_dynamic_expansion("de", 3, ne, rng);
      const Tensor x = random_tensor({L, 3}, rng);
      Tape t(false);
      Var xv = t.constant(x);
      auto [q, b] = build_dynamic_queries(t, p, xv);
      const Tensor c = matmul(xv, t.param(p.w_cond)).value();
      ++cases;
      ok += bitwise_equal(q.value(), oracle::materialized_dynamic_queries(c, p.query.value)) &&
            bitwise_equal(b.value(), oracle::materialized_dynamic_queries(c, p.bias.value));
    }
  r.passed = ok == cases;
  r.detail = std::to_string(ok) + "/" + std::to_string(cases) + " (L, N_E) pairs bitwise equal";
  return r;
}

CheckResult toy_overfit() {
  CheckResult r{6, "toy overfit"};
  const auto t0 = std::chrono::steady_clock::now();
  ToyRun s;
  Model model(s.config, 1);
  const auto path = scratch("overfit.bin");
  feature_cache_write(compute_features(model, s.data), path);
  const FeatureCache cache(path);
  RunOptions opts;
  opts.cache = &cache;
  TrainingProgress progress;
  run_stage(TrainingStageConfig::desk(1), model, s.data, opts, progress);
  const double xe = evaluate_xe(model, s.data, &cache);
  const double em = greedy_exact_match(model, s.data, &cache);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.passed = xe < 0.1 && em >= 0.95 && r.seconds < 300.0;
  r.detail = fmt("XE %.4f per token, ", xe) + fmt("greedy exact match %.1f%%, %.1fs", 100.0 * em, r.seconds);
  return r;
}

CheckResult scst_sanity() {
  CheckResult r{7, "SCST sanity"};
  ToyRun s;
  Model model(s.config, 1);
  const auto path = scratch("scst.bin");
  feature_cache_write(compute_features(model, s.data), path);
  const FeatureCache cache(path);
  RunOptions opts;
  opts.cache = &cache;
  TrainingProgress progress;
  auto warm = TrainingStageConfig::desk(1);
  warm.num_epochs = 60;
  run_stage(warm, model, s.data, opts, progress);
  run_stage(TrainingStageConfig::desk(2), model, s.data, opts, progress);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto* p : model.trainable_parameters(true))
    for (auto& v : p->value.data()) v += noise(rng);

  // zero advantage: greedy-temperature samples coincide, so every reward equals
  // its baseline and no parameter may move
  {
    Model copy = model;
    TrainingProgress p2 = progress;
    auto cold = TrainingStageConfig::desk(3);
    cold.sample_temperature = 0.0;
    RunOptions o2 = opts;
    o2.max_steps = 3;
    run_stage(cold, copy, s.data, o2, p2);
    const auto before = model.parameters();
    const auto after = static_cast<const Model&>(copy).parameters();
    bool unchanged = true;
    for (std::size_t i = 0; i < before.size(); ++i) unchanged = unchanged && bitwise_equal(before[i]->value, after[i]->value);
    if (!unchanged) {
      r.detail = "zero-advantage steps moved parameters";
      return r;
    }
  }
  const auto report = run_stage(TrainingStageConfig::desk(3), model, s.data, opts, progress);
  const auto& w = report.step_reward;
  if (w.size() < 20) {
    r.detail = "fewer than 20 SCST steps";
    return r;
  }
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += w[i] / 10.0;
    last += w[w.size() - 10 + i] / 10.0;
  }
  r.passed = last > first;
  r.detail = fmt("mean reward first 10 steps %.3f, last 10 steps %.3f", first, last) + "; zero-advantage steps exact";
  return r;
}

CheckResult feature_cache_equivalence() {
  CheckResult r{8, "feature-cache equivalence"};
  ToyRun s;
  const Model initial(s.config, 2);
  const auto path = scratch("equiv.bin");
  feature_cache_write(compute_features(initial, s.data), path);
  const FeatureCache cache(path);
  double worst = 0.0;
  bool frozen_ok = true;
  std::size_t steps = 0;
  for (int stage : {1, 3}) {
    std::vector<double> trace[2];
    Model result[2];
    for (int k = 0; k < 2; ++k) {
      Model m = initial;
      RunOptions opts;
      opts.seed = 5;
      opts.cache = &cache;
      opts.feature_mode = k == 0 ? FeatureMode::kCache : FeatureMode::kLive;
      opts.max_steps = 15;
      TrainingProgress progress{stage - 1};
      const auto rep = run_stage(TrainingStageConfig::desk(stage), m, s.data, opts, progress);
      trace[k] = rep.step_loss;
      trace[k].insert(trace[k].end(), rep.step_reward.begin(), rep.step_reward.end());
      result[k] = std::move(m);
    }
    steps += trace[0].size() / 2;
    if (trace[0].size() != trace[1].size()) return r;
    for (std::size_t i = 0; i < trace[0].size(); ++i) worst = std::max(worst, std::abs(trace[0][i] - trace[1][i]));
    Model before = initial;
    for (auto& m : result) {
      const auto a = m.backbone_parameters(), b = before.backbone_parameters();
      for (std::size_t i = 0; i < a.size(); ++i) frozen_ok = frozen_ok && bitwise_equal(a[i]->value, b[i]->value);
    }
  }
  r.passed = worst <= 1e-6 && frozen_ok;
  r.detail = std::to_string(steps) + " steps (stages 1 and 3), max per-step diff " + fmt("%.1e", worst) +
             (frozen_ok ? ", backbone bitwise unchanged" : ", backbone changed");
  return r;
}

CheckResult metric_oracles() {
  CheckResult r{9, "metric oracles"};
  std::mt19937_64 rng(909);
  auto refs = [&](int vocab, int n) {
    std::uniform_int_distribution<int> tok(0, vocab - 1), len(1, 8);
    std::vector<Sentence> out(static_cast<std::size_t>(n));
    for (auto& s : out)
      for (int k = len(rng); k > 0; --k) s.push_back(tok(rng));
    return out;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<Sentence>> corpus;
    for (int i = 0; i < 1 + trial % 5; ++i) corpus.push_back(refs(3 + trial % 6, 1 + trial % 3));
    const auto stats = compute_doc_freq(corpus);
    const Sentence cand = refs(3 + trial % 6, 1)[0];
    const auto& rs = corpus[static_cast<std::size_t>(trial) % corpus.size()];
    worst = std::max(worst, std::abs(cider_d(cand, rs, stats) - oracle::brute_cider(cand, rs, corpus)));
  }
  const Sentence s = {1, 2, 3, 4, 5};
  const double identical = cider_d(s, {s}, compute_doc_freq({{s}, {{9, 8, 7}}, {{6, 6}}}));
  r.passed = worst <= 1e-9 && std::abs(identical - 10.0) <= 1e-12;
  r.detail = fmt("50 cases max diff %.1e, identical sentence %.12g", worst, identical);
  return r;
}

CheckResult decoder_optimality() {
  CheckResult r{10, "decoder optimality"};
  std::size_t ok = 0;
  const std::size_t seeds = 50;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    testing::HashStub m(4, seed, 4.0);
    const auto all = testing::enumerate_sequences(m, 4);
    const auto beams = beam_search(m, 64, 4);
    ok += !beams.empty() && beams[0].tokens == all[0].tokens;
  }
  r.passed = ok == seeds;
  r.detail = std::to_string(ok) + "/" + std::to_string(seeds) + " stub models: beam 64 returns the exhaustive argmax";
  return r;
}

CheckResult schedule_conformance() {
  CheckResult r{11, "schedule conformance"};
  struct Point {
    int stage;
    std::size_t epoch, step;
    double want;
  };
  const Point points[] = {{1, 0, 1, 2e-8},      {1, 0, 5000, 1e-4},     {1, 0, 10000, 2e-4},
                          {1, 1, 12000, 2e-4},  {1, 2, 20000, 1.6e-4},  {1, 4, 30000, 1.28e-4},
                          {1, 7, 60000, 1.024e-4}, {2, 0, 1, 3e-5},     {2, 1, 500, 1.65e-5},
                          {3, 0, 1, 1e-4},      {3, 1, 10, 8e-5},       {3, 8, 10, 1e-4 * std::pow(0.8, 8)},
                          {4, 0, 1, 2e-6},      {4, 0, 999999, 2e-6}};
  std::size_t ok = 0;
  for (const auto& p : points) {
    const double got = lr_at(TrainingStageConfig::paper(p.stage), p.epoch, p.step);
    ok += std::abs(got - p.want) <= 1e-12 * p.want + 1e-20;
  }
  const std::size_t n = sizeof(points) / sizeof(points[0]);
  r.passed = ok == n;
  r.detail = std::to_string(ok) + "/" + std::to_string(n) + " sampled (stage, epoch, step) points";
  return r;
}

const std::vector<CheckEntry>& all_checks() {
  static const std::vector<CheckEntry> entries = {
      {1, "gradient suite", false, gradient_suite},
      {2, "shape restoration", false, shape_restoration},
      {3, "causality", false, causality},
      {4, "block reduction", false, block_reduction},
      {5, "dynamic-query oracle", false, dynamic_query_oracle},
      {6, "toy overfit", true, toy_overfit},
      {7, "SCST sanity", true, scst_sanity},
      {8, "feature-cache equivalence", true, feature_cache_equivalence},
      {9, "metric oracles", false, metric_oracles},
      {10, "decoder optimality", false, decoder_optimality},
      {11, "schedule conformance", false, schedule_conformance},
  };
  return entries;
}

std::vector<CheckResult> run_checks(bool include_training) {
  std::vector<CheckResult> out;
  for (const auto& e : all_checks()) {
    if (e.training && !include_training) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = e.run();
    } catch (const std::exception& ex) {
      r = CheckResult{e.id, e.name, false, std::string("exception: ") + ex.what()};
    }
    r.id = e.id;
    r.name = e.name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace xpn::checks
