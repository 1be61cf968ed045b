// src/losses.cpp

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

#include "xpn/losses.hpp"

#include <string>

namespace xpn {

std::size_t count_tokens(std::span<const int> targets, std::span<const std::uint8_t> mask) {
  if (mask.empty()) return targets.size();
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

Var xe_loss(Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask) {
  const std::size_t M = logits.rows(), V = logits.cols();
  if (targets.size() != M) throw DimensionError("xe_loss: " + std::to_string(targets.size()) + " targets for " +
                                                std::to_string(M) + " logit rows");
  if (!mask.empty() && mask.size() != M) throw DimensionError("xe_loss: mask length differs from targets");
  std::vector<std::size_t> rows, cols;
  for (std::size_t t = 0; t < M; ++t) {
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= V)
      throw ConfigError("xe_loss: target id " + std::to_string(targets[t]) + " outside vocabulary of size " +
                        std::to_string(V));
    if (!mask.empty() && !mask[t]) continue;
    rows.push_back(t);
    cols.push_back(static_cast<std::size_t>(targets[t]));
  }
  if (rows.empty()) return logits.tape->constant(Tensor({1}));
  return scale(sum(pick(log_softmax_rows(logits), rows, cols)), -1.0);
}

std::vector<double> baseline_mean_of_others(std::span<const double> rewards) {
  const std::size_t k = rewards.size();
  if (k < 2) throw ConfigError("baseline needs at least two samples per image");
  double total = 0.0;
  for (double r : rewards) total += r;
  std::vector<double> b(k);
  for (std::size_t j = 0; j < k; ++j) b[j] = (total - rewards[j]) / static_cast<double>(k - 1);
  return b;
}

Var scst_loss(std::span<const Var> sequence_log_probs, std::span<const double> rewards,
              std::span<const double> baselines) {
  const std::size_t k = sequence_log_probs.size();
  if (k < 2) throw ConfigError("scst_loss: needs at least two samples");
  if (rewards.size() != k || baselines.size() != k) throw DimensionError("scst_loss: sample count mismatch");
  Var total = scale(sequence_log_probs[0], -(rewards[0] - baselines[0]) / static_cast<double>(k));
  for (std::size_t j = 1; j < k; ++j)
    total = add(total, scale(sequence_log_probs[j], -(rewards[j] - baselines[j]) / static_cast<double>(k)));
  return total;
}

double scst_loss(const SampleSet& s) {
  const std::size_t k = s.size();
  if (k < 2) throw ConfigError("scst_loss: needs at least two samples");
  if (s.log_probs.size() != k || s.rewards.size() != k || s.baselines.size() != k)
    throw DimensionError("scst_loss: sample set fields disagree in length");
  double loss = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double lp = 0.0;
    for (double v : s.log_probs[j]) lp += v;
    loss += -(s.rewards[j] - s.baselines[j]) * lp;
  }
  return loss / static_cast<double>(k);
}

}  // namespace xpn
