// src/blocks.cpp

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

#include "xpn/blocks.hpp"

#include <cmath>

namespace xpn {

namespace {

Parameter uniform_param(std::string name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return Parameter(std::move(name), std::move(t));
}

void append(std::vector<Parameter*>& out, std::vector<Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

std::vector<Parameter*> EncoderLayerParams::parameters() {
  std::vector<Parameter*> out;
  append(out, norm_expansion.parameters());
  append(out, expansion.parameters());
  append(out, norm_ff.parameters());
  append(out, ff.parameters());
  return out;
}

std::vector<Parameter*> DecoderLayerParams::parameters() {
  std::vector<Parameter*> out;
  append(out, norm_expansion.parameters());
  append(out, expansion.parameters());
  append(out, norm_attention.parameters());
  append(out, attention.parameters());
  append(out, norm_ff.parameters());
  append(out, ff.parameters());
  return out;
}

LayerNormParams make_layer_norm(const std::string& prefix, std::size_t d) {
  LayerNormParams p;
  p.gamma = Parameter(prefix + ".gamma", Tensor({d}, 1.0));
  p.beta = Parameter(prefix + ".beta", Tensor({d}, 0.0));
  return p;
}

CrossAttentionParams make_cross_attention(const std::string& prefix, std::size_t d, std::size_t heads,
                                          std::mt19937_64& rng) {
  if (heads == 0 || d % heads != 0)
    throw ConfigError("cross_attention: " + std::to_string(heads) + " heads do not divide d_model " +
                      std::to_string(d));
  CrossAttentionParams p;
  p.heads = heads;
  p.w_query = uniform_param(prefix + ".w_query", {d, d}, d, rng);
  p.w_key = uniform_param(prefix + ".w_key", {d, d}, d, rng);
  p.w_value = uniform_param(prefix + ".w_value", {d, d}, d, rng);
  p.w_out = uniform_param(prefix + ".w_out", {d, d}, d, rng);
  return p;
}

FeedForwardParams make_feed_forward(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                    std::mt19937_64& rng) {
  if (d == 0 || d_ff == 0) throw ConfigError("feed_forward: widths must be positive");
  FeedForwardParams p;
  p.w1 = uniform_param(prefix + ".w1", {d, d_ff}, d, rng);
  p.b1 = Parameter(prefix + ".b1", Tensor({d_ff}));
  p.w2 = uniform_param(prefix + ".w2", {d_ff, d}, d_ff, rng);
  p.b2 = Parameter(prefix + ".b2", Tensor({d}));
  return p;
}

EncoderLayerParams make_encoder_layer(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                      const std::vector<std::size_t>& groups, std::mt19937_64& rng) {
  EncoderLayerParams p;
  p.norm_expansion = make_layer_norm(prefix + ".norm_expansion", d);
  p.expansion = make_static_expansion(prefix + ".expansion", d, groups, rng);
  p.norm_ff = make_layer_norm(prefix + ".norm_ff", d);
  p.ff = make_feed_forward(prefix + ".ff", d, d_ff, rng);
  return p;
}

DecoderLayerParams make_decoder_layer(const std::string& prefix, std::size_t d, std::size_t d_ff,
                                      std::size_t expansion, std::size_t heads, std::mt19937_64& rng) {
  DecoderLayerParams p;
  p.norm_expansion = make_layer_norm(prefix + ".norm_expansion", d);
  p.expansion = make_dynamic_expansion(prefix + ".expansion", d, expansion, rng);
  p.norm_attention = make_layer_norm(prefix + ".norm_attention", d);
  p.attention = make_cross_attention(prefix + ".attention", d, heads, rng);
  p.norm_ff = make_layer_norm(prefix + ".norm_ff", d);
  p.ff = make_feed_forward(prefix + ".ff", d, d_ff, rng);
  return p;
}

Var layer_norm(Tape& tape, const LayerNormParams& p, Var x) {
  return layer_norm(x, tape.param(p.gamma), tape.param(p.beta), p.eps);
}

Var cross_attention(Tape& tape, const CrossAttentionParams& p, Var y, Var x_enc) {
  const std::size_t d = p.d_model();
  if (p.heads == 0 || d % p.heads != 0)
    throw ConfigError("cross_attention: " + std::to_string(p.heads) + " heads do not divide d_model " +
                      std::to_string(d));
  if (y.cols() != d || x_enc.cols() != d)
    throw DimensionError("cross_attention: queries " + shape_str(y.shape()) + ", keys " +
                         shape_str(x_enc.shape()) + ", d_model " + std::to_string(d));
  Var q = matmul(y, tape.param(p.w_query));
  Var k = matmul(x_enc, tape.param(p.w_key));
  Var v = matmul(x_enc, tape.param(p.w_value));
  return matmul(attend_heads(q, k, v, p.heads), tape.param(p.w_out));
}

Var attend_heads(Var q, Var k, Var v, std::size_t heads) {
  const std::size_t dh = q.cols() / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  if (heads == 1) return matmul(softmax_rows(scale(matmul_nt(q, k), inv)), v);
  std::vector<Var> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    parts.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), inv)), vh));
  }
  return concat_cols(parts);
}

std::vector<Tensor> cross_attention_weights(const CrossAttentionParams& p, const Tensor& y,
                                            const Tensor& x_enc) {
  Tape tape(false);
  const std::size_t dh = p.d_model() / p.heads;
  Var q = matmul(tape.constant(y), tape.param(p.w_query));
  Var k = matmul(tape.constant(x_enc), tape.param(p.w_key));
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    Var s = matmul_nt(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh));
    out.push_back(softmax_rows(scale(s, 1.0 / std::sqrt(static_cast<double>(dh)))).value());
  }
  return out;
}

Var feed_forward(Tape& tape, const FeedForwardParams& p, Var x) {
  Var h = add(matmul(x, tape.param(p.w1)), tape.param(p.b1));
  h = p.activation == Activation::kRelu ? relu(h) : sigmoid(h);
  return add(matmul(h, tape.param(p.w2)), tape.param(p.b2));
}

Var encoder_layer(Tape& tape, const EncoderLayerParams& p, Var x) {
  Var b = add(x, static_expansion_forward(tape, p.expansion, layer_norm(tape, p.norm_expansion, x)));
  return add(b, feed_forward(tape, p.ff, layer_norm(tape, p.norm_ff, b)));
}

Var decoder_layer(Tape& tape, const DecoderLayerParams& p, Var y, Var x_enc, bool causal) {
  Var b = add(y, dynamic_expansion_forward(tape, p.expansion, layer_norm(tape, p.norm_expansion, y), causal));
  Var w = add(b, cross_attention(tape, p.attention, layer_norm(tape, p.norm_attention, b), x_enc));
  return add(w, feed_forward(tape, p.ff, layer_norm(tape, p.norm_ff, w)));
}

}  // namespace xpn
