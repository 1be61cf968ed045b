// src/metrics.cpp

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

#include "xpn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "xpn/tensor.hpp"

namespace xpn {

namespace {

using Counts = std::map<NGram, double>;

std::array<Counts, kMaxNGram> count_ngrams(const Sentence& s) {
  std::array<Counts, kMaxNGram> out;
  for (int n = 1; n <= kMaxNGram; ++n)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
      out[static_cast<std::size_t>(n - 1)][NGram(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                 s.begin() + static_cast<std::ptrdiff_t>(i) + n)] += 1.0;
  return out;
}

struct TfIdf {
  std::array<Counts, kMaxNGram> vec;
  std::array<double, kMaxNGram> norm{};
  double length = 0.0;
};

TfIdf tf_idf(const Sentence& s, const DocFreqStats& stats) {
  TfIdf out;
  const double log_n = std::log(static_cast<double>(stats.corpus_size));
  auto counts = count_ngrams(s);
  for (std::size_t n = 0; n < kMaxNGram; ++n) {
    for (auto& [g, tf] : counts[n]) {
      const double df = std::log(std::max(1.0, static_cast<double>(stats.doc_freq(g))));
      const double v = tf * (log_n - df);
      out.vec[n][g] = v;
      out.norm[n] += v * v;
    }
    out.norm[n] = std::sqrt(out.norm[n]);
  }
  out.length = static_cast<double>(s.size());
  return out;
}

std::array<double, kMaxNGram> similarity(const TfIdf& hyp, const TfIdf& ref, double sigma) {
  std::array<double, kMaxNGram> val{};
  const double delta = hyp.length - ref.length;
  for (std::size_t n = 0; n < kMaxNGram; ++n) {
    for (auto& [g, hv] : hyp.vec[n]) {
      auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) val[n] += std::min(hv, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val[n] /= hyp.norm[n] * ref.norm[n];
    val[n] *= std::exp(-(delta * delta) / (2.0 * sigma * sigma));
  }
  return val;
}

}  // namespace

int TokenInterner::intern(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(ids_.size()));
  return it->second;
}

Sentence TokenInterner::intern_all(const std::vector<std::string>& tokens) {
  Sentence s;
  s.reserve(tokens.size());
  for (const auto& t : tokens) s.push_back(intern(t));
  return s;
}

std::size_t DocFreqStats::doc_freq(const NGram& g) const {
  if (g.empty() || g.size() > kMaxNGram) return 0;
  const auto& m = df[g.size() - 1];
  auto it = m.find(g);
  return it == m.end() ? 0 : it->second;
}

DocFreqStats compute_doc_freq(const std::vector<std::vector<Sentence>>& reference_sets) {
  if (reference_sets.empty()) throw ConfigError("compute_doc_freq: empty reference corpus");
  DocFreqStats stats;
  stats.corpus_size = reference_sets.size();
  for (const auto& refs : reference_sets) {
    std::array<std::set<NGram>, kMaxNGram> present;
    for (const auto& r : refs) {
      auto counts = count_ngrams(r);
      for (std::size_t n = 0; n < kMaxNGram; ++n)
        for (auto& [g, c] : counts[n]) present[n].insert(g);
    }
    for (std::size_t n = 0; n < kMaxNGram; ++n)
      for (const auto& g : present[n]) ++stats.df[n][g];
  }
  return stats;
}

double cider_d(const Sentence& candidate, const std::vector<Sentence>& references, const DocFreqStats& stats,
               double sigma) {
  if (candidate.empty() || references.empty()) return 0.0;
  if (stats.corpus_size == 0) throw ConfigError("cider_d: document-frequency stats are empty");
  const TfIdf hyp = tf_idf(candidate, stats);
  std::array<double, kMaxNGram> total{};
  for (const auto& r : references) {
    const auto s = similarity(hyp, tf_idf(r, stats), sigma);
    for (std::size_t n = 0; n < kMaxNGram; ++n) total[n] += s[n];
  }
  double mean = 0.0;
  for (double v : total) mean += v;
  mean /= static_cast<double>(kMaxNGram);
  return mean / static_cast<double>(references.size()) * 10.0;
}

double bleu_corpus(const std::vector<Sentence>& candidates, const std::vector<std::vector<Sentence>>& references,
                   int n) {
  if (n < 1 || n > kMaxNGram) throw ConfigError("bleu: n must be in 1..4");
  if (candidates.size() != references.size()) throw DimensionError("bleu: candidate/reference count mismatch");
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    auto cc = count_ngrams(c);
    std::array<Counts, kMaxNGram> max_ref;
    std::size_t best = 0;
    bool have_best = false;
    for (const auto& r : references[i]) {
      auto rc = count_ngrams(r);
      for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k)
        for (auto& [g, v] : rc[k]) max_ref[k][g] = std::max(max_ref[k][g], v);
      const auto diff = [&](std::size_t len) {
        return len > c.size() ? len - c.size() : c.size() - len;
      };
      if (!have_best || diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
        best = r.size();
        have_best = true;
      }
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k)
      for (auto& [g, v] : cc[k]) {
        total[k] += v;
        auto it = max_ref[k].find(g);
        if (it != max_ref[k].end()) matched[k] += std::min(v, it->second);
      }
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(best);
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
    if (matched[k] == 0.0 || total[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / static_cast<double>(n));
}

double bleu_n(const Sentence& candidate, const std::vector<Sentence>& references, int n) {
  return bleu_corpus({candidate}, {references}, n);
}

MetricReport evaluate_captions(const std::vector<Sentence>& candidates,
                               const std::vector<std::vector<Sentence>>& references) {
  if (candidates.size() != references.size()) throw DimensionError("evaluate: candidate/reference count mismatch");
  MetricReport r;
  r.images = candidates.size();
  if (candidates.empty()) return r;
  const DocFreqStats stats = compute_doc_freq(references);
  for (std::size_t i = 0; i < candidates.size(); ++i) r.cider += cider_d(candidates[i], references[i], stats);
  r.cider /= static_cast<double>(candidates.size());
  for (int n = 1; n <= kMaxNGram; ++n) r.bleu[static_cast<std::size_t>(n - 1)] = bleu_corpus(candidates, references, n);
  return r;
}

}  // namespace xpn
