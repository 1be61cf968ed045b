// src/data.cpp

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

#include "xpn/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"

namespace xpn {

namespace {

const char* const kReserved[kNumReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}, 0) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens, std::size_t min_count) : min_count_(min_count) {
  tokens_.assign(std::begin(kReserved), std::end(kReserved));
  for (const auto& t : tokens) {
    if (t.empty()) throw FormatError("vocabulary: empty token");
    if (std::find(std::begin(kReserved), std::end(kReserved), t) != std::end(kReserved))
      throw FormatError("vocabulary: reserved token '" + t + "' listed as a regular token");
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw FormatError("vocabulary: duplicate token '" + tokens_[i] + "'");
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() || it->second < kNumReserved ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return id(token) != kUnkId; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw NotFoundError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::regular_tokens() const { return {tokens_.begin() + kNumReserved, tokens_.end()}; }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write vocabulary " + path.string());
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, std::size_t min_count) {
  std::ifstream is(path);
  if (!is) throw NotFoundError("vocabulary not found: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(tokens, min_count);
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<std::string> preprocess_caption(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    char c = (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s.push_back(' ');
    s += t;
  }
  return s;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw ConfigError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& caption : corpus)
    for (const auto& t : caption) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary(tokens, min_count);
}

Vocabulary build_vocab(const std::vector<CaptionRecord>& records, std::size_t min_count) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& r : records)
    if (r.split == Split::kTrain)
      for (const auto& c : r.captions) corpus.push_back(preprocess_caption(c));
  return build_vocab(corpus, min_count);
}

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               std::size_t max_len) {
  if (max_len < 2) throw ConfigError("encode_tokens: max_len must leave room for BOS and EOS");
  std::vector<int> ids = {kBosId};
  for (const auto& t : tokens) {
    if (ids.size() + 1 >= max_len) break;
    ids.push_back(vocab.id(t));
  }
  ids.push_back(kEosId);
  return ids;
}

std::vector<std::string> decode_tokens(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (i == 0 && id == kBosId) continue;
    if (id == kEosId) break;
    if (id == kPadId) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<CaptionRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFoundError("dataset not found: " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return FormatError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    CaptionRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.features = j.value("features", r.id);
      r.captions = j.at("captions").get<std::vector<std::string>>();
      r.split = parse_split(j.value("split", std::string("train")));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const FormatError& e) {
      throw fail(e.what());
    }
    if (r.id.empty()) throw fail("empty id");
    if (r.captions.empty()) throw fail("record '" + r.id + "' has no captions");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw FormatError("dataset " + path.string() + " holds no records");
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<CaptionRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write dataset " + path.string());
  for (const auto& r : records) {
    nlohmann::json j = {{"id", r.id}, {"features", r.features}, {"captions", r.captions}, {"split", split_name(r.split)}};
    os << j.dump() << '\n';
  }
}

std::vector<const CaptionRecord*> select_split(const std::vector<CaptionRecord>& records, Split split) {
  std::vector<const CaptionRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::vector<CaptionExample> encode_examples(std::span<const CaptionRecord* const> records,
                                            const Vocabulary& vocab, std::size_t max_len,
                                            std::vector<std::string>* warnings) {
  std::vector<CaptionExample> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    for (const auto& c : records[i]->captions) {
      auto tokens = preprocess_caption(c);
      if (tokens.empty()) {
        if (warnings) warnings->push_back("record '" + records[i]->id + "': caption \"" + c + "\" is empty after preprocessing, skipped");
        continue;
      }
      out.push_back({i, encode_tokens(tokens, vocab, max_len)});
    }
  return out;
}

std::span<const int> Batch::sequence(std::size_t b) const {
  return std::span<const int>(tokens).subspan(b * width, lengths[b]);
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n_items, std::size_t batch_size,
                                                       std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order only depends on mt19937_64.
  for (std::size_t i = n_items; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n_items; s += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n_items, s + batch_size)));
  return out;
}

std::vector<Batch> make_batches(const std::vector<CaptionExample>& examples, std::size_t batch_size,
                                std::uint64_t seed) {
  std::vector<Batch> out;
  for (auto& items : shuffled_batches(examples.size(), batch_size, seed)) {
    Batch b;
    b.items = std::move(items);
    for (auto i : b.items) b.width = std::max(b.width, examples[i].tokens.size());
    b.tokens.assign(b.items.size() * b.width, kPadId);
    b.mask.assign(b.items.size() * b.width, 0);
    for (std::size_t r = 0; r < b.items.size(); ++r) {
      const auto& t = examples[b.items[r]].tokens;
      b.lengths.push_back(t.size());
      for (std::size_t c = 0; c < t.size(); ++c) {
        b.tokens[r * b.width + c] = t[c];
        b.mask[r * b.width + c] = 1;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace xpn
