// tests/stub_models.hpp

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

#ifndef XPN_TESTS_STUB_MODELS_HPP_
#define XPN_TESTS_STUB_MODELS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "xpn/decoding.hpp"

namespace xpn::testing {

// Deterministic pseudo-random next-token distribution per prefix, derived
// from a hash of (seed, prefix).
class HashStub : public StepModel {
 public:
  HashStub(std::size_t vocab, std::uint64_t seed, double sharpness = 3.0)
      : vocab_(vocab), seed_(seed), sharpness_(sharpness) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> prefix) override {
    ++calls;
    std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ull + 17;
    for (int t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 1)) * 0x100000001B3ull;
    std::vector<double> logits(vocab_);
    for (auto& l : logits) {
      h ^= h >> 33;
      h *= 0xff51afd7ed558ccdull;
      h ^= h >> 33;
      l = sharpness_ * static_cast<double>(h >> 11) * 0x1.0p-53;
    }
    double mx = *std::max_element(logits.begin(), logits.end()), total = 0.0;
    for (double l : logits) total += std::exp(l - mx);
    for (auto& l : logits) l -= mx + std::log(total);
    return logits;
  }
  int calls = 0;

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  double sharpness_;
};

// Explicit table: prefix -> probabilities; missing prefixes are uniform.
class TableStub : public StepModel {
 public:
  explicit TableStub(std::size_t vocab) : vocab_(vocab) {}
  std::size_t vocab_size() const override { return vocab_; }
  void set(std::vector<int> prefix, std::vector<double> probs) { table_[std::move(prefix)] = std::move(probs); }
  std::vector<double> log_probs(std::span<const int> prefix) override {
    auto it = table_.find(std::vector<int>(prefix.begin(), prefix.end()));
    std::vector<double> out(vocab_, -std::log(static_cast<double>(vocab_)));
    if (it != table_.end())
      for (std::size_t i = 0; i < vocab_; ++i) out[i] = std::log(it->second[i]);
    return out;
  }

 private:
  std::size_t vocab_;
  std::map<std::vector<int>, std::vector<double>> table_;
};

// Every terminated sequence (EOS or max_len reached) with its total
// log-probability, found by exhaustive recursion.
inline std::vector<Hypothesis> enumerate_sequences(StepModel& m, std::size_t max_len) {
  std::vector<Hypothesis> out;
  std::function<void(Hypothesis)> rec = [&](Hypothesis h) {
    const auto lp = m.log_probs(h.tokens);
    for (std::size_t v = 0; v < lp.size(); ++v) {
      Hypothesis c = h;
      c.tokens.push_back(static_cast<int>(v));
      c.log_prob += lp[v];
      if (static_cast<int>(v) == m.eos()) {
        out.push_back(c);
      } else if (c.tokens.size() >= max_len) {
        c.forced = true;
        out.push_back(c);
      } else {
        rec(c);
      }
    }
  };
  rec(Hypothesis{{m.bos()}, 0.0, false});
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    const double ma = a.mean_log_prob(), mb = b.mean_log_prob();
    if (ma != mb) return ma > mb;
    return a.tokens < b.tokens;
  });
  return out;
}

}  // namespace xpn::testing

#endif  // XPN_TESTS_STUB_MODELS_HPP_
