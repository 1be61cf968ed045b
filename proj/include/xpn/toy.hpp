// include/xpn/toy.hpp

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

#ifndef XPN_TOY_HPP_
#define XPN_TOY_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "xpn/data.hpp"
#include "xpn/model.hpp"

namespace xpn {

// Synthetic captioning set: one coloured shape on a background that brightens
// left to right (the encoder sees patches as a set, so position has to show in
// the pixels), one caption per image ("a red square on the left"). Records are parallel to
// images; `features` holds "images/<id>.ppm".
struct ToyDataset {
  std::vector<CaptionRecord> records;
  std::vector<Image> images;
};

// The first `train` records cover colour x shape x side combinations in
// order (30 distinct captions); `test` records reuse them at other heights.
// Pixel values are multiples of 1/255 so they survive a PPM round trip.
ToyDataset make_toy_dataset(std::size_t train = 30, std::size_t test = 0, std::size_t size = 8,
                            std::uint64_t seed = 7);

// Binary 8-bit PPM (P6), values scaled to [0, 1].
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

// JSON feature matrix: {"rows": N, "cols": d, "data": [...]} or a nested
// array of rows.
VisualFeatures read_feature_json(const std::filesystem::path& path, const std::string& id);

// Resolves each record's `features` against `base_dir` and loads the PPM
// images. Throws FormatError if any record does not name a .ppm file.
std::vector<Image> load_record_images(std::span<const CaptionRecord> records, const std::filesystem::path& base_dir);

// Writes dataset.jsonl plus images/ under `dir`.
void write_toy_dataset(const std::filesystem::path& dir, const ToyDataset& toy);

}  // namespace xpn

#endif  // XPN_TOY_HPP_
