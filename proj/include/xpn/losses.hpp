// include/xpn/losses.hpp

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

#ifndef XPN_LOSSES_HPP_
#define XPN_LOSSES_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "xpn/autograd.hpp"

namespace xpn {

// Sum over unmasked positions of -log softmax(logits)[t, target[t]].
// An empty mask means every position counts.
Var xe_loss(Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask = {});
std::size_t count_tokens(std::span<const int> targets, std::span<const std::uint8_t> mask = {});

// b_j = (sum_{i != j} r_i) / (k - 1); k >= 2.
std::vector<double> baseline_mean_of_others(std::span<const double> rewards);

// k sampled captions for one image.
struct SampleSet {
  std::vector<std::vector<int>> sequences;
  std::vector<std::vector<double>> log_probs;  // per generated token
  std::vector<double> rewards;
  std::vector<double> baselines;

  std::size_t size() const { return sequences.size(); }
};

// mean_j -(r_j - b_j) * sum_t logp_{j,t}; gradients reach only the
// log-probabilities. `sequence_log_probs[j]` is a scalar node.
Var scst_loss(std::span<const Var> sequence_log_probs, std::span<const double> rewards,
              std::span<const double> baselines);
// Value-only form over recorded log-probabilities.
double scst_loss(const SampleSet& samples);

}  // namespace xpn

#endif  // XPN_LOSSES_HPP_
