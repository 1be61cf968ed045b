// include/xpn/feature_cache.hpp

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

#ifndef XPN_FEATURE_CACHE_HPP_
#define XPN_FEATURE_CACHE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xpn/model.hpp"

namespace xpn {

inline constexpr char kFeatureCacheMagic[4] = {'X', 'P', 'N', 'F'};
inline constexpr std::uint32_t kFeatureCacheVersion = 1;

void feature_cache_write(std::span<const VisualFeatures> features, const std::filesystem::path& path);

// The whole file is read into memory on open; lookups are const and safe to
// call from several threads.
class FeatureCache {
 public:
  explicit FeatureCache(const std::filesystem::path& path);

  std::size_t size() const { return offsets_.size(); }
  bool contains(const std::string& id) const { return offsets_.count(id) != 0; }
  VisualFeatures read(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  std::string bytes_;
  std::unordered_map<std::string, std::uint64_t> offsets_;
  std::vector<std::string> order_;
};

VisualFeatures feature_cache_read(const std::filesystem::path& path, const std::string& id);

}  // namespace xpn

#endif  // XPN_FEATURE_CACHE_HPP_
