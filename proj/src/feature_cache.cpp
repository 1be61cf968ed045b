// src/feature_cache.cpp

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

#include "xpn/feature_cache.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "xpn/binary_io.hpp"

namespace xpn {

void feature_cache_write(std::span<const VisualFeatures> features, const std::filesystem::path& path) {
  std::unordered_set<std::string> seen;
  std::uint64_t index_bytes = 0;
  for (const auto& f : features) {
    if (!seen.insert(f.id).second) throw ConfigError("feature cache: duplicate id '" + f.id + "'");
    if (f.rows == 0 || f.cols == 0 || f.data.size() != f.rows * f.cols)
      throw DimensionError("feature cache: malformed features for '" + f.id + "'");
    index_bytes += 4 + f.id.size() + 8;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write feature cache " + path.string());
  os.write(kFeatureCacheMagic, 4);
  io::write_u32(os, kFeatureCacheVersion);
  io::write_u64(os, features.size());
  std::uint64_t offset = 4 + 4 + 8 + index_bytes;
  for (const auto& f : features) {
    io::write_u32(os, static_cast<std::uint32_t>(f.id.size()));
    os.write(f.id.data(), static_cast<std::streamsize>(f.id.size()));
    io::write_u64(os, offset);
    offset += 8 + 4 * f.data.size();
  }
  for (const auto& f : features) {
    io::write_u32(os, static_cast<std::uint32_t>(f.rows));
    io::write_u32(os, static_cast<std::uint32_t>(f.cols));
    for (float v : f.data) io::write_f32(os, v);
  }
  if (!os) throw Error("failed writing feature cache " + path.string());
}

FeatureCache::FeatureCache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("feature cache not found: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  bytes_ = ss.str();
  io::ByteReader in(bytes_);
  if (in.bytes(4, "magic") != std::string(kFeatureCacheMagic, 4))
    throw FormatError(path.string() + " is not a feature cache");
  const std::uint32_t version = in.u32("version");
  if (version != kFeatureCacheVersion)
    throw FormatError("feature cache version " + std::to_string(version) + " unsupported");
  const std::uint64_t count = in.u64("record count");
  if (count > bytes_.size()) throw FormatError("feature cache record count is implausible");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t len = in.u32("id length");
    std::string id = in.bytes(len, "id");
    const std::uint64_t off = in.u64("offset");
    if (off + 8 > bytes_.size()) throw FormatError("feature cache offset for '" + id + "' is out of range");
    if (!offsets_.emplace(id, off).second) throw FormatError("feature cache: duplicate id '" + id + "'");
    order_.push_back(std::move(id));
  }
}

VisualFeatures FeatureCache::read(const std::string& id) const {
  auto it = offsets_.find(id);
  if (it == offsets_.end()) throw NotFoundError("feature cache has no entry for '" + id + "'");
  io::ByteReader in(bytes_, it->second);
  VisualFeatures f;
  f.id = id;
  f.rows = in.u32("rows");
  f.cols = in.u32("cols");
  if (it->second + 8 + 4 * f.rows * f.cols > bytes_.size())
    throw FormatError("feature cache record '" + id + "' is truncated");
  f.data.resize(f.rows * f.cols);
  for (auto& v : f.data) v = in.f32("payload");
  return f;
}

std::vector<std::string> FeatureCache::ids() const { return order_; }

VisualFeatures feature_cache_read(const std::filesystem::path& path, const std::string& id) {
  return FeatureCache(path).read(id);
}

}  // namespace xpn
