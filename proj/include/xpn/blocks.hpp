// include/xpn/blocks.hpp

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

#ifndef XPN_BLOCKS_HPP_
#define XPN_BLOCKS_HPP_

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "xpn/autograd.hpp"
#include "xpn/expansion.hpp"

namespace xpn {

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormParams {
  Parameter gamma;  // d, starts at ones
  Parameter beta;   // d, starts at zeros
  double eps = kLayerNormEps;

  std::vector<Parameter*> parameters() { return {&gamma, &beta}; }
};

struct CrossAttentionParams {
  std::size_t heads = 1;
  Parameter w_query;  // d x d
  Parameter w_key;
  Parameter w_value;
  Parameter w_out;

  std::size_t d_model() const { return w_query.value.rows(); }
  std::vector<Parameter*> parameters() { return {&w_query, &w_key, &w_value, &w_out}; }
};

enum class Activation { kRelu, kSigmoid };

struct FeedForwardParams {
  Parameter w1;  // d x d_ff
  Parameter b1;  // d_ff
  Parameter w2;  // d_ff x d
  Parameter b2;  // d
  Activation activation = Activation::kRelu;

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

struct EncoderLayerParams {
  LayerNormParams norm_expansion;
  StaticExpansionParams expansion;
  LayerNormParams norm_ff;
  FeedForwardParams ff;

  std::vector<Parameter*> parameters();
};

struct DecoderLayerParams {
  LayerNormParams norm_expansion;
  DynamicExpansionParams expansion;
  LayerNormParams norm_attention;
  CrossAttentionParams attention;
  LayerNormParams norm_ff;
  FeedForwardParams ff;

  std::vector<Parameter*> parameters();
};

LayerNormParams make_layer_norm(const std::string& prefix, std::size_t d);
CrossAttentionParams make_cross_attention(const std::string& prefix, std::size_t d, std::size_t heads,
                                          std::mt19937_64& rng);
FeedForwardParams make_feed_forward(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                    std::mt19937_64& rng);
EncoderLayerParams make_encoder_layer(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                      const std::vector<std::size_t>& groups, std::mt19937_64& rng);
DecoderLayerParams make_decoder_layer(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                      std::size_t expansion, std::size_t heads, std::mt19937_64& rng);

Var layer_norm(Tape& tape, const LayerNormParams& p, Var x);

// Multi-head attention of queries from `y` over keys/values from `x_enc`,
// no mask.
Var cross_attention(Tape& tape, const CrossAttentionParams& p, Var y, Var x_enc);
// Scaled dot-product attention over already-projected q/k/v, heads taken as
// equal column slices, heads concatenated (no output projection).
Var attend_heads(Var q, Var k, Var v, std::size_t heads);
// Per-head attention weights (M x N each) for inspection.
std::vector<Tensor> cross_attention_weights(const CrossAttentionParams& p, const Tensor& y,
                                            const Tensor& x_enc);

Var feed_forward(Tape& tape, const FeedForwardParams& p, Var x);

// Pre-LN residual layers.
Var encoder_layer(Tape& tape, const EncoderLayerParams& p, Var x);
Var decoder_layer(Tape& tape, const DecoderLayerParams& p, Var y, Var x_enc, bool causal = true);

}  // namespace xpn

#endif  // XPN_BLOCKS_HPP_
