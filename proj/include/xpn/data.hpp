// include/xpn/data.hpp

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

#ifndef XPN_DATA_HPP_
#define XPN_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xpn/model.hpp"

namespace xpn {

class Vocabulary {
 public:
  Vocabulary();
  // `tokens` are the non-reserved entries in id order (id = index + 4).
  Vocabulary(const std::vector<std::string>& tokens, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  // Unknown tokens map to UNK.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  // Non-reserved tokens in id order.
  std::vector<std::string> regular_tokens() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path, std::size_t min_count = 0);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t min_count_ = 0;
};

enum class Split { kTrain, kVal, kTest };
Split parse_split(std::string_view s);
const char* split_name(Split s);

struct CaptionRecord {
  std::string id;
  std::string features;  // cache key or image path
  std::vector<std::string> captions;
  Split split = Split::kTrain;
};

// Lowercase, map everything outside [a-z0-9 ] to a space, split, drop empties.
std::vector<std::string> preprocess_caption(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

// Keeps tokens seen at least `min_count` times, ordered by (count desc,
// token asc).
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count = 5);
// Builds from the preprocessed captions of the training split.
Vocabulary build_vocab(const std::vector<CaptionRecord>& records, std::size_t min_count = 5);

// BOS + ids + EOS, cut to max_len with EOS kept as the last id.
std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                               std::size_t max_len);
// Drops a leading BOS and stops at the first EOS; PAD ids are skipped.
std::vector<std::string> decode_tokens(std::span<const int> ids, const Vocabulary& vocab);

// One JSON object per line: {"id","features","captions","split"}.
// Malformed lines raise FormatError naming the line.
std::vector<CaptionRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<CaptionRecord>& records);

std::vector<const CaptionRecord*> select_split(const std::vector<CaptionRecord>& records, Split split);

// One encoded caption attached to its image.
struct CaptionExample {
  std::size_t record = 0;  // index into the record list
  std::vector<int> tokens;
};

// Encodes every caption of `records`; captions that preprocess to nothing are
// skipped and reported through `warnings`.
std::vector<CaptionExample> encode_examples(std::span<const CaptionRecord* const> records,
                                            const Vocabulary& vocab, std::size_t max_len,
                                            std::vector<std::string>* warnings = nullptr);

struct Batch {
  std::vector<std::size_t> items;  // indices into the example list
  std::size_t width = 0;           // longest sequence in the batch
  std::vector<int> tokens;         // items.size() x width, PAD filled
  std::vector<std::uint8_t> mask;  // 1 where tokens is not PAD
  std::vector<std::size_t> lengths;

  std::size_t size() const { return items.size(); }
  // Unpadded sequence of row b.
  std::span<const int> sequence(std::size_t b) const;
};

// Seeded shuffle of item order, cut into batches of `batch_size` (last one
// may be short).
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n_items, std::size_t batch_size,
                                                       std::uint64_t seed);
std::vector<Batch> make_batches(const std::vector<CaptionExample>& examples, std::size_t batch_size,
                                std::uint64_t seed);

}  // namespace xpn

#endif  // XPN_DATA_HPP_
