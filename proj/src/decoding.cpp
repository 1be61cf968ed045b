// src/decoding.cpp

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

#include "xpn/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace xpn {

namespace {

std::vector<double> log_softmax(const Tensor& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits.data()) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : logits.data()) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

int argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

void check_max_len(std::size_t max_len) {
  if (max_len < 2) throw ConfigError("decoding: max_len must be at least 2 (BOS plus one token)");
}

}  // namespace

ModelStepper::ModelStepper(const Model& model, Tensor enc) : model_(model), enc_(std::move(enc)) {}

const ModelStepper::Entry& ModelStepper::lookup(const std::vector<int>& prefix) {
  auto it = cache_.find(prefix);
  if (it != cache_.end()) return it->second;
  DecoderState state;
  if (prefix.size() == 1) {
    state = model_.start_decoding(enc_);
  } else {
    std::vector<int> parent(prefix.begin(), prefix.end() - 1);
    state = lookup(parent).state;
  }
  const Tensor logits = model_.decode_step(state, prefix.back());
  Entry e{std::move(state), log_softmax(logits)};
  return cache_.emplace(prefix, std::move(e)).first->second;
}

std::vector<double> ModelStepper::log_probs(std::span<const int> prefix) {
  if (prefix.empty() || prefix.front() != bos()) throw ConfigError("decoding prefix must start with BOS");
  return lookup(std::vector<int>(prefix.begin(), prefix.end())).log_probs;
}

double Hypothesis::mean_log_prob() const {
  const std::size_t n = generated();
  return n == 0 ? 0.0 : log_prob / static_cast<double>(n);
}

std::vector<Hypothesis> beam_search(StepModel& model, std::size_t beam_size, std::size_t max_len) {
  if (beam_size == 0) throw ConfigError("beam_search: beam size must be >= 1");
  check_max_len(max_len);
  std::vector<Hypothesis> active = {Hypothesis{{model.bos()}, 0.0, false}};
  std::vector<Hypothesis> done;
  auto by_cumulative = [](const Hypothesis& a, const Hypothesis& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  };
  while (!active.empty()) {
    std::vector<Hypothesis> candidates;
    for (const auto& h : active) {
      const auto lp = model.log_probs(h.tokens);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        Hypothesis c = h;
        c.tokens.push_back(static_cast<int>(v));
        c.log_prob += lp[v];
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      by_cumulative);
    active.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis& c = candidates[i];
      if (c.tokens.back() == model.eos()) {
        done.push_back(std::move(c));
      } else if (c.tokens.size() >= max_len) {
        c.forced = true;
        done.push_back(std::move(c));
      } else {
        active.push_back(std::move(c));
      }
    }
  }
  std::stable_sort(done.begin(), done.end(), [](const Hypothesis& a, const Hypothesis& b) {
    const double ma = a.mean_log_prob(), mb = b.mean_log_prob();
    if (ma != mb) return ma > mb;
    return a.tokens < b.tokens;
  });
  return done;
}

Hypothesis greedy(StepModel& model, std::size_t max_len) {
  check_max_len(max_len);
  Hypothesis h{{model.bos()}, 0.0, false};
  while (true) {
    const auto lp = model.log_probs(h.tokens);
    const int v = argmax(lp);
    h.tokens.push_back(v);
    h.log_prob += lp[static_cast<std::size_t>(v)];
    if (v == model.eos()) break;
    if (h.tokens.size() >= max_len) {
      h.forced = true;
      break;
    }
  }
  return h;
}

double SampledSequence::total_log_prob() const {
  double s = 0.0;
  for (double v : log_probs) s += v;
  return s;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<SampledSequence> sample_k(StepModel& model, std::size_t k, std::mt19937_64& rng,
                                      std::size_t max_len, double temperature) {
  check_max_len(max_len);
  if (temperature < 0.0) throw ConfigError("sample_k: temperature must be >= 0");
  std::vector<SampledSequence> out(k);
  for (auto& s : out) {
    s.tokens = {model.bos()};
    while (true) {
      const auto lp = model.log_probs(s.tokens);
      int v;
      if (temperature == 0.0) {
        v = argmax(lp);
      } else {
        // probabilities proportional to exp(lp / T)
        double mx = -std::numeric_limits<double>::infinity();
        for (double x : lp) mx = std::max(mx, x / temperature);
        std::vector<double> w(lp.size());
        double total = 0.0;
        for (std::size_t i = 0; i < lp.size(); ++i) total += (w[i] = std::exp(lp[i] / temperature - mx));
        const double u = uniform01(rng) * total;
        double acc = 0.0;
        v = static_cast<int>(lp.size()) - 1;
        for (std::size_t i = 0; i < w.size(); ++i) {
          acc += w[i];
          if (u < acc) {
            v = static_cast<int>(i);
            break;
          }
        }
      }
      s.tokens.push_back(v);
      s.log_probs.push_back(lp[static_cast<std::size_t>(v)]);
      if (v == model.eos() || s.tokens.size() >= max_len) break;
    }
  }
  return out;
}

}  // namespace xpn
