// include/xpn/metrics.hpp

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

#ifndef XPN_METRICS_HPP_
#define XPN_METRICS_HPP_

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

// Captions are scored as sequences of integer token ids. Model outputs are
// already ids; free text goes through TokenInterner first.

namespace xpn {

using Sentence = std::vector<int>;
using NGram = std::vector<int>;

inline constexpr int kMaxNGram = 4;
inline constexpr double kCiderSigma = 6.0;

class TokenInterner {
 public:
  int intern(const std::string& token);
  Sentence intern_all(const std::vector<std::string>& tokens);

 private:
  std::unordered_map<std::string, int> ids_;
};

// For each n in 1..4, the number of images whose reference set contains the
// n-gram at least once.
struct DocFreqStats {
  std::array<std::map<NGram, std::size_t>, kMaxNGram> df;
  std::size_t corpus_size = 0;

  std::size_t doc_freq(const NGram& g) const;
};

DocFreqStats compute_doc_freq(const std::vector<std::vector<Sentence>>& reference_sets);

// CIDEr-D of one candidate against its references, in [0, 10].
double cider_d(const Sentence& candidate, const std::vector<Sentence>& references, const DocFreqStats& stats,
               double sigma = kCiderSigma);

// Corpus BLEU-n with the closest-reference-length brevity penalty.
double bleu_corpus(const std::vector<Sentence>& candidates, const std::vector<std::vector<Sentence>>& references,
                   int n);
// Single-sentence BLEU-n (a corpus of one).
double bleu_n(const Sentence& candidate, const std::vector<Sentence>& references, int n);

struct MetricReport {
  double cider = 0.0;
  std::array<double, kMaxNGram> bleu{};
  std::size_t images = 0;
};

// Mean CIDEr-D (document frequencies taken from `references`) and corpus
// BLEU-1..4.
MetricReport evaluate_captions(const std::vector<Sentence>& candidates,
                               const std::vector<std::vector<Sentence>>& references);

}  // namespace xpn

#endif  // XPN_METRICS_HPP_
