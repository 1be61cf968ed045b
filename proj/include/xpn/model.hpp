// include/xpn/model.hpp

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

#ifndef XPN_MODEL_HPP_
#define XPN_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xpn/blocks.hpp"

namespace xpn {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReserved = 4;

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t n_enc = 2;
  std::size_t n_dec = 2;
  std::size_t dyn_expansion = 4;
  std::vector<std::size_t> groups = {4, 8, 16};
  std::size_t heads = 2;
  std::size_t vocab_size = 0;
  std::size_t max_caption_len = 22;  // counts BOS and EOS
  std::size_t feature_dim = 6;       // d_b
  // Patch size of the built-in toy backbone; 0 means features arrive from an
  // external extractor and the model owns no backbone parameters.
  std::size_t toy_patch = 2;
  double expansion_eps = kDefaultExpansionEps;
  Activation ff_activation = Activation::kRelu;

  static ModelConfig paper();
  static ModelConfig desk();
  static ModelConfig preset(const std::string& name);

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Backbone output for one image: N x d_b, stored as f32.
struct VisualFeatures {
  std::string id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Tensor to_tensor() const;
  static VisualFeatures from_tensor(std::string id, const Tensor& t);
  bool operator==(const VisualFeatures&) const = default;
};

// H x W RGB image, row-major with interleaved channels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> rgb;

  double at(std::size_t y, std::size_t x, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
};

// Pools each P x P patch into 3P values: for patch row r (0..P-1) and channel
// c, the mean over the P pixels of that row, stored at index r * 3 + c.
// Patches are emitted in raster order, so N = (H / P) * (W / P).
Tensor toy_backbone_pool(const Image& image, std::size_t patch);

// Learned d_b x d_b projection applied after pooling; starts as identity.
struct ToyBackboneParams {
  Parameter weight;
  Parameter bias;

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

class Model;

// Incremental decoding state: per-layer caches of everything the next
// position needs from earlier positions.
struct DecoderState {
  struct Layer {
    Tensor enc_key, enc_value;     // N x d, cross-attention keys/values
    std::vector<double> key;       // t x d
    std::vector<double> value1;    // t x d
    std::vector<double> value2;    // t x d
    std::vector<double> query;     // t*N_E x d
    std::vector<double> expanded1; // t*N_E x d
    std::vector<double> expanded2; // t*N_E x d
  };
  std::vector<Layer> layers;
  std::vector<int> prefix;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // All parameters in a fixed registration order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> backbone_parameters();
  // Everything except the backbone when `backbone_frozen`.
  std::vector<Parameter*> trainable_parameters(bool backbone_frozen);
  std::size_t parameter_count() const;
  Parameter* find(const std::string& name);

  bool has_backbone() const { return config_.toy_patch > 0; }
  // Pooled image -> backbone features (N x d_b).
  Var backbone(Tape& tape, Var pooled) const;
  VisualFeatures extract_features(const Image& image, const std::string& id) const;

  Var input_projection(Tape& tape, Var features) const;
  Var encode(Tape& tape, Var features) const;
  // tokens[0] must be BOS; returns M x vocab_size logits.
  Var decode_train(Tape& tape, std::span<const int> tokens, Var enc) const;

  // Next-token logits for `prefix`, recomputed from scratch.
  Tensor decode_step(std::span<const int> prefix, const Tensor& enc) const;
  // Cached variant: feed tokens one at a time.
  DecoderState start_decoding(const Tensor& enc) const;
  Tensor decode_step(DecoderState& state, int token) const;

  Tensor encode_features(const VisualFeatures& f) const;

  const ToyBackboneParams& backbone_params() const { return backbone_; }
  const Parameter& input_weight() const { return input_weight_; }
  const Parameter& input_bias() const { return input_bias_; }
  const std::vector<EncoderLayerParams>& encoder_layers() const { return encoder_; }
  std::vector<EncoderLayerParams>& encoder_layers() { return encoder_; }
  const std::vector<DecoderLayerParams>& decoder_layers() const { return decoder_; }
  std::vector<DecoderLayerParams>& decoder_layers() { return decoder_; }
  const Parameter& embedding() const { return embedding_; }
  const Parameter& classifier_weight() const { return classifier_weight_; }
  const Parameter& classifier_bias() const { return classifier_bias_; }

 private:
  void check_tokens(std::span<const int> tokens) const;
  Var embed(Tape& tape, std::span<const int> tokens, std::size_t first_position) const;

  ModelConfig config_;
  ToyBackboneParams backbone_;
  Parameter input_weight_;  // d_b x d_m
  Parameter input_bias_;    // d_m
  std::vector<EncoderLayerParams> encoder_;
  std::vector<DecoderLayerParams> decoder_;
  Parameter embedding_;          // V x d_m
  Parameter classifier_weight_;  // d_m x V
  Parameter classifier_bias_;    // V
};

// Closed-form parameter count.
std::size_t parameter_count_formula(const ModelConfig& c);

// Sinusoidal encoding, rows = positions first .. first + count - 1.
Tensor positional_encoding(std::size_t first, std::size_t count, std::size_t d);

inline constexpr char kCheckpointMagic[4] = {'X', 'P', 'N', '2'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// `meta` is stored next to the model config in the header (vocabulary,
// training progress); load returns it unchanged.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& meta);
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace xpn

#endif  // XPN_MODEL_HPP_
