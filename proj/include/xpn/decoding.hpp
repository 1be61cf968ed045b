// include/xpn/decoding.hpp

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

#ifndef XPN_DECODING_HPP_
#define XPN_DECODING_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "xpn/model.hpp"

namespace xpn {

// Anything that yields next-token log-probabilities for a prefix starting
// with BOS.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual int bos() const { return kBosId; }
  virtual int eos() const { return kEosId; }
  virtual std::vector<double> log_probs(std::span<const int> prefix) = 0;
};

// Adapts a Model with fixed encoder output. Decoder states are memoized per
// prefix so extending a beam costs one incremental step.
class ModelStepper : public StepModel {
 public:
  ModelStepper(const Model& model, Tensor enc);
  std::size_t vocab_size() const override { return model_.config().vocab_size; }
  std::vector<double> log_probs(std::span<const int> prefix) override;

 private:
  struct Entry {
    DecoderState state;
    std::vector<double> log_probs;
  };
  const Entry& lookup(const std::vector<int>& prefix);

  const Model& model_;
  Tensor enc_;
  std::map<std::vector<int>, Entry> cache_;
};

struct Hypothesis {
  std::vector<int> tokens;  // BOS, generated ids, EOS when finished normally
  double log_prob = 0.0;    // sum over generated tokens
  bool forced = false;      // cut at max_len without EOS

  std::size_t generated() const { return tokens.empty() ? 0 : tokens.size() - 1; }
  double mean_log_prob() const;
};

// Keeps the best `beam_size` extensions by cumulative log-probability each
// step (ties: smaller token sequence first); EOS or max_len retires a beam.
// Results are sorted by mean per-token log-probability. `max_len` counts BOS.
std::vector<Hypothesis> beam_search(StepModel& model, std::size_t beam_size, std::size_t max_len);
Hypothesis greedy(StepModel& model, std::size_t max_len);

struct SampledSequence {
  std::vector<int> tokens;         // BOS ... [EOS]
  std::vector<double> log_probs;   // model log-probability of each generated token
  double total_log_prob() const;
};

// k independent rollouts. Temperature scales logits before sampling; 0 takes
// the argmax. Recorded log-probabilities are always the untempered model ones.
std::vector<SampledSequence> sample_k(StepModel& model, std::size_t k, std::mt19937_64& rng,
                                      std::size_t max_len, double temperature = 1.0);

// Uniform double in [0, 1) from 53 random bits.
double uniform01(std::mt19937_64& rng);

}  // namespace xpn

#endif  // XPN_DECODING_HPP_
