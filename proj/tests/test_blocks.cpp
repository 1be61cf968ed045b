// tests/test_blocks.cpp

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

#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "xpn/blocks.hpp"
#include "xpn/grad_check.hpp"

using namespace xpn;
using xpn::testing::random_tensor;
using xpn::testing::weighted_sum;

namespace {

void zero_all(std::vector<Parameter*> ps) {
  for (auto* p : ps) p->value.fill(0.0);
}

void randomize(std::vector<Parameter*> ps, std::mt19937_64& rng) {
  for (auto* p : ps) p->value = random_tensor(p->value.shape(), rng, -0.8, 0.8);
}

Tensor eval_encoder(const EncoderLayerParams& p, const Tensor& x) {
  Tape t(false);
  return encoder_layer(t, p, t.constant(x)).value();
}

Tensor eval_decoder(const DecoderLayerParams& p, const Tensor& y, const Tensor& enc) {
  Tape t(false);
  return decoder_layer(t, p, t.constant(y), t.constant(enc)).value();
}

Tensor oracle_static(const StaticExpansionParams& p, const Tensor& x) {
  return oracle::expansion({x, p.query.value, p.bias.value, p.w_key.value, p.w_value1.value, p.w_value2.value,
                            p.w_select.value, p.groups, p.eps, 0});
}

Tensor oracle_dynamic(const DynamicExpansionParams& p, const Tensor& x) {
  const Tensor c = oracle::naive_matmul(x, p.w_cond.value);
  return oracle::expansion({x, oracle::materialized_dynamic_queries(c, p.query.value),
                            oracle::materialized_dynamic_queries(c, p.bias.value), p.w_key.value,
                            p.w_value1.value, p.w_value2.value, p.w_select.value, {x.rows() * p.expansion},
                            p.eps, p.expansion});
}

Tensor oracle_ff(const FeedForwardParams& p, const Tensor& x) {
  return oracle::feed_forward(x, p.w1.value, p.b1.value, p.w2.value, p.b2.value);
}

Tensor oracle_ln(const LayerNormParams& p, const Tensor& x) {
  return oracle::layer_norm(x, p.gamma.value, p.beta.value, p.eps);
}

}  // namespace

TEST_CASE("cross_attention with a single key returns the projected value everywhere") {
  std::mt19937_64 rng(1);
  auto p = make_cross_attention("ca", 4, 2, rng);
  const Tensor x = random_tensor({1, 4}, rng);
  const Tensor expect = oracle::naive_matmul(oracle::naive_matmul(x, p.w_value.value), p.w_out.value);
  for (std::size_t m : {1u, 3u, 6u}) {
    Tape t(false);
    const Tensor y = cross_attention(t, p, t.constant(random_tensor({m, 4}, rng)), t.constant(x)).value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(y.at(i, j) - expect.at(0, j)) <= 1e-12);
  }
}

TEST_CASE("cross_attention weights are row-stochastic") {
  std::mt19937_64 rng(2);
  auto p = make_cross_attention("ca", 8, 4, rng);
  const auto weights = cross_attention_weights(p, random_tensor({5, 8}, rng, -4, 4), random_tensor({7, 8}, rng, -4, 4));
  REQUIRE(weights.size() == 4);
  for (const auto& w : weights)
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0.0;
      for (double v : w.row(i)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("cross_attention matches the per-head loop oracle") {
  std::mt19937_64 rng(3);
  for (std::size_t heads : {1u, 2u, 4u}) {
    auto p = make_cross_attention("ca", 8, heads, rng);
    const Tensor y = random_tensor({5, 8}, rng), x = random_tensor({3, 8}, rng);
    Tape t(false);
    const Tensor got = cross_attention(t, p, t.constant(y), t.constant(x)).value();
    const Tensor want =
        oracle::cross_attention(y, x, p.w_query.value, p.w_key.value, p.w_value.value, p.w_out.value, heads);
    CHECK(max_abs_diff(got, want) <= 1e-12);
  }
}

TEST_CASE("cross_attention rejects heads that do not divide d_model") {
  std::mt19937_64 rng(4);
  CHECK_THROWS_AS(make_cross_attention("ca", 6, 4, rng), ConfigError);
  auto p = make_cross_attention("ca", 6, 3, rng);
  p.heads = 4;
  Tape t(false);
  CHECK_THROWS_AS(cross_attention(t, p, t.constant(Tensor::matrix(2, 6)), t.constant(Tensor::matrix(2, 6))),
                  ConfigError);
}

TEST_CASE("feed_forward examples") {
  std::mt19937_64 rng(5);
  auto p = make_feed_forward("ff", 4, 8, rng);
  zero_all(p.parameters());
  Tape t(false);
  for (double v : feed_forward(t, p, t.constant(random_tensor({3, 4}, rng))).value().data()) CHECK(v == 0.0);

  auto id = make_feed_forward("ff", 4, 4, rng);
  id.w1.value = Tensor::identity(4);
  id.w2.value = Tensor::identity(4);
  const Tensor x = random_tensor({3, 4}, rng, 0.1, 2.0);
  CHECK(bitwise_equal(feed_forward(t, id, t.constant(x)).value(), x));
}

TEST_CASE("encoder_layer with zero sublayers is the identity") {
  std::mt19937_64 rng(6);
  auto p = make_encoder_layer("enc", 4, 8, {3, 5}, rng);
  zero_all(p.expansion.parameters());
  zero_all(p.ff.parameters());
  const Tensor x = random_tensor({6, 4}, rng);
  CHECK(bitwise_equal(eval_encoder(p, x), x));
}

TEST_CASE("encoder_layer output shape matches input") {
  std::mt19937_64 rng(7);
  for (std::size_t L : {1u, 4u, 11u}) {
    auto p = make_encoder_layer("enc", 8, 16, {2, 7}, rng);
    CHECK(eval_encoder(p, random_tensor({L, 8}, rng)).shape() == Shape{L, 8});
  }
}

TEST_CASE("encoder_layer equals the composed sublayer oracles") {
  std::mt19937_64 rng(8);
  auto p = make_encoder_layer("enc", 2, 4, {2, 3}, rng);
  randomize(p.parameters(), rng);
  for (std::size_t L : {2u, 5u}) {
    const Tensor x = random_tensor({L, 2}, rng);
    const Tensor b = oracle::add(x, oracle_static(p.expansion, oracle_ln(p.norm_expansion, x)));
    const Tensor want = oracle::add(b, oracle_ff(p.ff, oracle_ln(p.norm_ff, b)));
    CHECK(max_abs_diff(eval_encoder(p, x), want) <= 1e-12);
  }
}

TEST_CASE("decoder_layer with zero sublayers is the identity") {
  std::mt19937_64 rng(9);
  auto p = make_decoder_layer("dec", 4, 8, 3, 2, rng);
  zero_all(p.expansion.parameters());
  zero_all(p.attention.parameters());
  zero_all(p.ff.parameters());
  const Tensor y = random_tensor({5, 4}, rng);
  CHECK(bitwise_equal(eval_decoder(p, y, random_tensor({3, 4}, rng)), y));
}

TEST_CASE("decoder_layer equals the composed sublayer oracles") {
  std::mt19937_64 rng(10);
  auto p = make_decoder_layer("dec", 4, 8, 2, 2, rng);
  randomize(p.parameters(), rng);
  const Tensor y = random_tensor({4, 4}, rng), enc = random_tensor({3, 4}, rng);
  const Tensor b = oracle::add(y, oracle_dynamic(p.expansion, oracle_ln(p.norm_expansion, y)));
  const auto& a = p.attention;
  const Tensor w = oracle::add(b, oracle::cross_attention(oracle_ln(p.norm_attention, b), enc, a.w_query.value,
                                                          a.w_key.value, a.w_value.value, a.w_out.value, a.heads));
  const Tensor want = oracle::add(w, oracle_ff(p.ff, oracle_ln(p.norm_ff, w)));
  CHECK(max_abs_diff(eval_decoder(p, y, enc), want) <= 1e-12);
}

TEST_CASE("decoder stack is causal under suffix perturbation") {
  std::mt19937_64 rng(11);
  std::vector<DecoderLayerParams> stack;
  for (int n = 0; n < 3; ++n) stack.push_back(make_decoder_layer("dec", 4, 8, 3, 2, rng));
  const Tensor enc = random_tensor({4, 4}, rng);
  auto run = [&](const Tensor& y0) {
    Tape t(false);
    Var y = t.constant(y0), e = t.constant(enc);
    for (const auto& l : stack) y = decoder_layer(t, l, y, e);
    return y.value();
  };
  const Tensor y = random_tensor({6, 4}, rng);
  const Tensor out = run(y);
  for (std::size_t t = 0; t + 1 < 6; ++t) {
    Tensor y2 = y;
    y2.at(t + 1, 0) += 1.5;
    const Tensor out2 = run(y2);
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(r, j) == out2.at(r, j));
  }
}

TEST_CASE("block gradients pass finite differences") {
  std::mt19937_64 rng(12);
  Parameter y("y", random_tensor({4, 4}, rng));
  Parameter enc("enc", random_tensor({3, 4}, rng));
  const Tensor w = random_tensor({4, 4}, rng);

  SUBCASE("cross attention") {
    auto p = make_cross_attention("ca", 4, 2, rng);
    auto ps = p.parameters();
    ps.push_back(&y);
    ps.push_back(&enc);
    auto r = grad_check([&](Tape& t) { return weighted_sum(cross_attention(t, p, t.param(y), t.param(enc)), w); },
                        ps);
    INFO(r.summary());
    CHECK(r.passed);
  }
  SUBCASE("feed forward") {
    auto p = make_feed_forward("ff", 4, 8, rng);
    randomize(p.parameters(), rng);
    auto ps = p.parameters();
    ps.push_back(&y);
    auto r = grad_check([&](Tape& t) { return weighted_sum(feed_forward(t, p, t.param(y)), w); }, ps);
    INFO(r.summary());
    CHECK(r.passed);
  }
  SUBCASE("layer norm") {
    auto p = make_layer_norm("ln", 4);
    randomize(p.parameters(), rng);
    auto ps = p.parameters();
    ps.push_back(&y);
    auto r = grad_check([&](Tape& t) { return weighted_sum(layer_norm(t, p, t.param(y)), w); }, ps);
    INFO(r.summary());
    CHECK(r.passed);
  }
  SUBCASE("encoder layer") {
    auto p = make_encoder_layer("enc", 4, 8, {2, 3}, rng);
    auto ps = p.parameters();
    ps.push_back(&y);
    auto r = grad_check([&](Tape& t) { return weighted_sum(encoder_layer(t, p, t.param(y)), w); }, ps);
    INFO(r.summary());
    CHECK(r.passed);
  }
  SUBCASE("decoder layer") {
    auto p = make_decoder_layer("dec", 4, 8, 2, 2, rng);
    auto ps = p.parameters();
    ps.push_back(&y);
    ps.push_back(&enc);
    auto r = grad_check(
        [&](Tape& t) { return weighted_sum(decoder_layer(t, p, t.param(y), t.param(enc)), w); }, ps);
    INFO(r.summary());
    CHECK(r.passed);
  }
}
