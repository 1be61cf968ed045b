// src/toy.cpp

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

#include "xpn/toy.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace xpn {

namespace {

struct Colour {
  const char* name;
  std::array<int, 3> rgb;
};

constexpr std::array<Colour, 5> kColours = {{{"red", {230, 30, 30}},
                                             {"green", {30, 200, 40}},
                                             {"blue", {30, 50, 230}},
                                             {"yellow", {230, 220, 30}},
                                             {"white", {250, 250, 250}}}};
constexpr std::array<const char*, 3> kShapes = {"square", "bar", "dot"};
constexpr std::array<const char*, 2> kSides = {"left", "right"};

// Shape footprint relative to its top-left corner, scaled for an 8x8 image.
bool covers(std::size_t shape, std::size_t dy, std::size_t dx) {
  switch (shape) {
    case 0: return dy < 3 && dx < 3;
    case 1: return dy == 1 && dx < 3;
    default: return dy == 1 && dx == 1;
  }
}

Image render(std::size_t size, std::size_t colour, std::size_t shape, std::size_t side, std::size_t top,
             std::mt19937_64& rng) {
  Image img{size, size, std::vector<double>(size * size * 3)};
  std::uniform_int_distribution<int> jitter(0, 6);
  const std::size_t left = side == 0 ? 0 : size - 3;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const int shade = 30 + static_cast<int>(20 * x * 8 / size + 3 * y) + jitter(rng);
      std::array<int, 3> px = {shade, shade, shade};
      if (y >= top && x >= left && covers(shape, y - top, x - left)) px = kColours[colour].rgb;
      for (std::size_t c = 0; c < 3; ++c) img.rgb[(y * size + x) * 3 + c] = px[c] / 255.0;
    }
  return img;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

ToyDataset make_toy_dataset(std::size_t train, std::size_t test, std::size_t size, std::uint64_t seed) {
  if (size < 4) throw ConfigError("toy images must be at least 4 pixels wide");
  const std::size_t combos = kColours.size() * kShapes.size() * kSides.size();
  std::mt19937_64 rng(seed);
  ToyDataset out;
  for (std::size_t n = 0; n < train + test; ++n) {
    const bool is_test = n >= train;
    const std::size_t k = (is_test ? n - train : n) % combos;
    const std::size_t colour = k / (kShapes.size() * kSides.size());
    const std::size_t shape = (k / kSides.size()) % kShapes.size();
    const std::size_t side = k % kSides.size();
    const std::size_t rows = size - 2;
    std::size_t top = (size - 3) / 2;
    if (is_test || n >= combos) top = (top + 1 + n / combos) % rows;
    out.images.push_back(render(size, colour, shape, side, top, rng));
    char id[32];
    std::snprintf(id, sizeof id, "toy_%03zu", n);
    CaptionRecord r;
    r.id = id;
    r.features = "images/" + r.id + ".ppm";
    r.captions = {std::string("a ") + kColours[colour].name + " " + kShapes[shape] + " on the " + kSides[side]};
    r.split = is_test ? Split::kTest : Split::kTrain;
    out.records.push_back(std::move(r));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != image.height * image.width * 3) throw DimensionError("write_ppm: pixel count mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.rgb) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    os.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
}

Image read_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  std::istringstream is(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  auto skip = [&] {
    while (true) {
      is >> std::ws;
      if (is.peek() != '#') return;
      std::string line;
      std::getline(is, line);
    }
  };
  is >> magic;
  skip();
  is >> w;
  skip();
  is >> h;
  skip();
  is >> maxval;
  if (!is || magic != "P6" || w == 0 || h == 0 || maxval != 255)
    throw FormatError(path.string() + ": expected an 8-bit binary PPM (P6)");
  is.get();
  const std::size_t offset = static_cast<std::size_t>(is.tellg());
  if (bytes.size() < offset + w * h * 3) throw FormatError(path.string() + ": truncated pixel data");
  Image img{h, w, std::vector<double>(w * h * 3)};
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    img.rgb[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
  return img;
}

VisualFeatures read_feature_json(const std::filesystem::path& path, const std::string& id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  VisualFeatures f;
  f.id = id;
  try {
    if (j.is_array()) {
      f.rows = j.size();
      f.cols = f.rows ? j.at(0).size() : 0;
      for (const auto& row : j) {
        if (row.size() != f.cols) throw FormatError(path.string() + ": ragged feature rows");
        for (const auto& v : row) f.data.push_back(v.get<float>());
      }
    } else {
      f.rows = j.at("rows").get<std::size_t>();
      f.cols = j.at("cols").get<std::size_t>();
      f.data = j.at("data").get<std::vector<float>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (f.rows == 0 || f.cols == 0 || f.data.size() != f.rows * f.cols)
    throw FormatError(path.string() + ": feature matrix is empty or its size does not match rows x cols");
  for (float v : f.data)
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite feature value");
  return f;
}

std::vector<Image> load_record_images(std::span<const CaptionRecord> records, const std::filesystem::path& base_dir) {
  std::vector<Image> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const std::filesystem::path p = base_dir / r.features;
    if (p.extension() != ".ppm") throw FormatError("record '" + r.id + "': features '" + r.features + "' is not a .ppm image");
    out.push_back(read_ppm(p));
  }
  return out;
}

void write_toy_dataset(const std::filesystem::path& dir, const ToyDataset& toy) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < toy.records.size(); ++i) write_ppm(dir / toy.records[i].features, toy.images[i]);
  save_dataset(dir / "dataset.jsonl", toy.records);
}

}  // namespace xpn
