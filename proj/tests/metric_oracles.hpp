// tests/metric_oracles.hpp

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

#ifndef XPN_TESTS_METRIC_ORACLES_HPP_
#define XPN_TESTS_METRIC_ORACLES_HPP_

// Brute-force CIDEr-D: n-grams keyed as strings, document frequency found by
// scanning every reference of every image, vectors kept as flat lists.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace xpn::oracle {

using Sent = std::vector<int>;

inline std::string gram_key(const Sent& s, std::size_t at, std::size_t n) {
  std::string k;
  for (std::size_t i = at; i < at + n; ++i) k += std::to_string(s[i]) + ",";
  return k;
}

inline bool sentence_has(const Sent& s, const std::string& key, std::size_t n) {
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    if (gram_key(s, i, n) == key) return true;
  return false;
}

inline double brute_cider(const Sent& cand, const std::vector<Sent>& refs,
                          const std::vector<std::vector<Sent>>& corpus, double sigma = 6.0) {
  if (cand.empty()) return 0.0;
  const double N = static_cast<double>(corpus.size());
  auto df = [&](const std::string& key, std::size_t n) {
    double c = 0.0;
    for (const auto& image : corpus) {
      bool hit = false;
      for (const auto& r : image) hit = hit || sentence_has(r, key, n);
      c += hit ? 1.0 : 0.0;
    }
    return c;
  };
  using Vec = std::vector<std::pair<std::string, double>>;
  auto vectorize = [&](const Sent& s, std::size_t n) {
    Vec v;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      const std::string k = gram_key(s, i, n);
      auto it = std::find_if(v.begin(), v.end(), [&](auto& e) { return e.first == k; });
      if (it == v.end()) v.emplace_back(k, 1.0);
      else it->second += 1.0;
    }
    for (auto& [k, tf] : v) tf *= std::log(N) - std::log(std::max(1.0, df(k, n)));
    return v;
  };
  auto norm = [](const Vec& v) {
    double s = 0.0;
    for (auto& e : v) s += e.second * e.second;
    return std::sqrt(s);
  };
  double score = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const Vec hv = vectorize(cand, n);
    for (const auto& r : refs) {
      const Vec rv = vectorize(r, n);
      double dot = 0.0;
      for (auto& [k, h] : hv)
        for (auto& [k2, rr] : rv)
          if (k == k2) dot += std::min(h, rr) * rr;
      const double nh = norm(hv), nr = norm(rv);
      if (nh != 0.0 && nr != 0.0) dot /= nh * nr;
      const double delta = static_cast<double>(cand.size()) - static_cast<double>(r.size());
      score += dot * std::exp(-delta * delta / (2.0 * sigma * sigma));
    }
  }
  return score / 4.0 / static_cast<double>(refs.size()) * 10.0;
}

}  // namespace xpn::oracle

#endif  // XPN_TESTS_METRIC_ORACLES_HPP_
