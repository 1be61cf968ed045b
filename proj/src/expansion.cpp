// src/expansion.cpp

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

#include "xpn/expansion.hpp"

#include <cmath>
#include <numeric>

#include "xpn/kernels.hpp"

namespace xpn {

namespace {

Parameter uniform_param(std::string name, Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return Parameter(std::move(name), std::move(t));
}

void check_width(const char* who, Var x, std::size_t d) {
  const Tensor& X = x.value();
  if (X.rank() != 2 || X.cols() != d || X.rows() == 0)
    throw DimensionError(std::string(who) + ": input " + shape_str(X.shape()) + " but d_model is " +
                         std::to_string(d));
}

// Shared tail of every expansion variant: forward expansion through the
// length transformation matrix `m` (T x L), backward retrieval through its
// transpose, then the sigmoid selection of the two ReLU paths.
Var expansion_core(Var m, Var v1, Var v2, Var s, Var bias, std::span<const std::size_t> groups,
                   BackwardNorm norm, double eps, const Tensor* fw_mask, const Tensor* bw_mask) {
  const std::size_t n_groups = groups.size();
  Var mt = transpose(m);
  std::vector<std::size_t> bw_blocks;
  if (norm == BackwardNorm::kPerGroup && n_groups > 1) bw_blocks.assign(groups.begin(), groups.end());

  auto path = [&](double sign, Var values) {
    Var fw = relu(scale(m, sign));
    if (fw_mask) fw = mul_const(fw, *fw_mask);
    Var expanded = add(matmul(psi_row_normalize(fw, eps), values), bias);
    Var bw = relu(scale(mt, sign));
    if (bw_mask) bw = mul_const(bw, *bw_mask);
    Var back = matmul(psi_row_normalize(bw, eps, bw_blocks), expanded);
    if (n_groups > 1) back = scale(back, 1.0 / static_cast<double>(n_groups));
    return back;
  };
  Var b1 = path(-1.0, v1);
  Var b2 = path(1.0, v2);
  Var gate = sigmoid(s);
  return add(mul(gate, b1), mul(affine(gate, -1.0, 1.0), b2));
}

}  // namespace

std::size_t StaticExpansionParams::total_rows() const {
  return std::accumulate(groups.begin(), groups.end(), std::size_t{0});
}

std::vector<Parameter*> StaticExpansionParams::parameters() {
  return {&query, &bias, &w_key, &w_value1, &w_value2, &w_select};
}

std::vector<Parameter*> DynamicExpansionParams::parameters() {
  return {&query, &bias, &w_cond, &w_key, &w_value1, &w_value2, &w_select};
}

StaticExpansionParams make_static_expansion(const std::string& prefix, std::size_t d_model,
                                            std::vector<std::size_t> groups, std::mt19937_64& rng,
                                            double eps) {
  if (d_model == 0) throw ConfigError("static expansion: d_model must be positive");
  if (groups.empty()) throw ConfigError("static expansion: group list is empty");
  for (auto g : groups)
    if (g == 0) throw ConfigError("static expansion: every group length must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("static expansion: eps must be positive");
  StaticExpansionParams p;
  p.groups = std::move(groups);
  p.eps = eps;
  const std::size_t T = p.total_rows();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  p.query = uniform_param(prefix + ".query", {T, d_model}, bound, rng);
  p.bias = uniform_param(prefix + ".bias", {T, d_model}, bound, rng);
  p.w_key = uniform_param(prefix + ".w_key", {d_model, d_model}, bound, rng);
  p.w_value1 = uniform_param(prefix + ".w_value1", {d_model, d_model}, bound, rng);
  p.w_value2 = uniform_param(prefix + ".w_value2", {d_model, d_model}, bound, rng);
  p.w_select = uniform_param(prefix + ".w_select", {d_model, d_model}, bound, rng);
  return p;
}

DynamicExpansionParams make_dynamic_expansion(const std::string& prefix, std::size_t d_model,
                                              std::size_t expansion, std::mt19937_64& rng, double eps) {
  if (d_model == 0) throw ConfigError("dynamic expansion: d_model must be positive");
  if (expansion == 0) throw ConfigError("dynamic expansion: expansion factor must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("dynamic expansion: eps must be positive");
  DynamicExpansionParams p;
  p.expansion = expansion;
  p.eps = eps;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  p.query = uniform_param(prefix + ".query", {expansion, d_model}, bound, rng);
  p.bias = uniform_param(prefix + ".bias", {expansion, d_model}, bound, rng);
  p.w_cond = uniform_param(prefix + ".w_cond", {d_model, d_model}, bound, rng);
  p.w_key = uniform_param(prefix + ".w_key", {d_model, d_model}, bound, rng);
  p.w_value1 = uniform_param(prefix + ".w_value1", {d_model, d_model}, bound, rng);
  p.w_value2 = uniform_param(prefix + ".w_value2", {d_model, d_model}, bound, rng);
  p.w_select = uniform_param(prefix + ".w_select", {d_model, d_model}, bound, rng);
  return p;
}

Tensor psi_row_normalize(const Tensor& m, double eps) {
  if (!(eps > 0.0)) throw ConfigError("psi_row_normalize: eps must be positive");
  Tensor out(m.shape());
  kernels::psi_rows(m.rows(), m.cols(), {}, eps, m.data(), out.data());
  return out;
}

Var static_expansion_forward(Tape& tape, const StaticExpansionParams& p, Var x) {
  const std::size_t d = p.d_model();
  check_width("static_expansion_forward", x, d);
  if (p.query.value.rows() != p.total_rows() || !p.query.value.same_shape(p.bias.value))
    throw DimensionError("static_expansion_forward: query/bias rows do not match the group list");
  Var k = matmul(x, tape.param(p.w_key));
  Var v1 = matmul(x, tape.param(p.w_value1));
  Var v2 = matmul(x, tape.param(p.w_value2));
  Var s = matmul(x, tape.param(p.w_select));
  Var m = scale(matmul_nt(tape.param(p.query), k), 1.0 / std::sqrt(static_cast<double>(d)));
  return expansion_core(m, v1, v2, s, tape.param(p.bias), p.groups, p.backward_norm, p.eps, nullptr,
                        nullptr);
}

std::pair<Var, Var> build_dynamic_queries(Tape& tape, const DynamicExpansionParams& p, Var x) {
  check_width("build_dynamic_queries", x, p.d_model());
  const std::size_t L = x.rows();
  Var c = matmul(x, tape.param(p.w_cond));
  Var c_rep = repeat_interleave_rows(c, p.expansion);
  Var q = add(c_rep, tile_rows(tape.param(p.query), L));
  Var b = add(c_rep, tile_rows(tape.param(p.bias), L));
  return {q, b};
}

Tensor causal_expansion_mask(std::size_t length, std::size_t expansion) {
  Tensor mask({length * expansion, length});
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t k = 0; k < expansion; ++k)
      for (std::size_t j = 0; j <= i; ++j) mask.at(i * expansion + k, j) = 1.0;
  return mask;
}

Tensor causal_retrieval_mask(std::size_t length, std::size_t expansion) {
  Tensor mask({length, length * expansion});
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i <= t; ++i)
      for (std::size_t k = 0; k < expansion; ++k) mask.at(t, i * expansion + k) = 1.0;
  return mask;
}

Var dynamic_expansion_forward(Tape& tape, const DynamicExpansionParams& p, Var x, bool causal) {
  const std::size_t d = p.d_model();
  check_width("dynamic_expansion_forward", x, d);
  const std::size_t L = x.rows();
  auto [q, b] = build_dynamic_queries(tape, p, x);
  Var k = matmul(x, tape.param(p.w_key));
  Var v1 = matmul(x, tape.param(p.w_value1));
  Var v2 = matmul(x, tape.param(p.w_value2));
  Var s = matmul(x, tape.param(p.w_select));
  Var m = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  const std::size_t groups[] = {L * p.expansion};
  if (!causal)
    return expansion_core(m, v1, v2, s, b, groups, BackwardNorm::kPerGroup, p.eps, nullptr, nullptr);
  const Tensor fw_mask = causal_expansion_mask(L, p.expansion);
  const Tensor bw_mask = causal_retrieval_mask(L, p.expansion);
  return expansion_core(m, v1, v2, s, b, groups, BackwardNorm::kPerGroup, p.eps, &fw_mask, &bw_mask);
}

}  // namespace xpn
