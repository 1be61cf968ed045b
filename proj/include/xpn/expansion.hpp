// include/xpn/expansion.hpp

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

#ifndef XPN_EXPANSION_HPP_
#define XPN_EXPANSION_HPP_

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "xpn/autograd.hpp"

namespace xpn {

// How the backward pass of a block static expansion normalizes the
// transposed length transformation matrix.
enum class BackwardNorm {
  kPerGroup,  // one normalization per group block, results averaged over groups
  kJoint,     // one normalization across all groups, then scaled by 1/N_G
};

inline constexpr double kDefaultExpansionEps = 1e-6;

// Static / block static expansion. `groups` lists the target lengths; the
// query and bias matrices stack one block of rows per group.
struct StaticExpansionParams {
  std::vector<std::size_t> groups;
  Parameter query;   // T x d, T = sum(groups)
  Parameter bias;    // T x d
  Parameter w_key;   // d x d
  Parameter w_value1;
  Parameter w_value2;
  Parameter w_select;
  double eps = kDefaultExpansionEps;
  BackwardNorm backward_norm = BackwardNorm::kPerGroup;

  std::size_t d_model() const { return w_key.value.rows(); }
  std::size_t total_rows() const;
  std::vector<Parameter*> parameters();
};

struct DynamicExpansionParams {
  std::size_t expansion = 1;  // N_E
  Parameter query;            // N_E x d
  Parameter bias;             // N_E x d
  Parameter w_cond;           // d x d, produces C
  Parameter w_key;
  Parameter w_value1;
  Parameter w_value2;
  Parameter w_select;
  double eps = kDefaultExpansionEps;

  std::size_t d_model() const { return w_key.value.rows(); }
  std::vector<Parameter*> parameters();
};

// Parameters drawn from U(-1/sqrt(d), 1/sqrt(d)).
StaticExpansionParams make_static_expansion(const std::string& prefix, std::size_t d_model,
                                            std::vector<std::size_t> groups, std::mt19937_64& rng,
                                            double eps = kDefaultExpansionEps);
DynamicExpansionParams make_dynamic_expansion(const std::string& prefix, std::size_t d_model,
                                              std::size_t expansion, std::mt19937_64& rng,
                                              double eps = kDefaultExpansionEps);

// Plain-tensor row normalization x / (sum(x) + eps).
Tensor psi_row_normalize(const Tensor& m, double eps);

Var static_expansion_forward(Tape& tape, const StaticExpansionParams& p, Var x);

// Returns (Q_E, B_E), each (L * N_E) x d: row i * N_E + k is C[i] + E[k].
std::pair<Var, Var> build_dynamic_queries(Tape& tape, const DynamicExpansionParams& p, Var x);

Var dynamic_expansion_forward(Tape& tape, const DynamicExpansionParams& p, Var x, bool causal);

// 0/1 mask over the (L * N_E) x L length transformation matrix: entry
// (i * N_E + k, j) is kept iff j <= i.
Tensor causal_expansion_mask(std::size_t length, std::size_t expansion);
// 0/1 mask over the transposed L x (L * N_E) matrix: entry (t, i * N_E + k)
// is kept iff i <= t.
Tensor causal_retrieval_mask(std::size_t length, std::size_t expansion);

}  // namespace xpn

#endif  // XPN_EXPANSION_HPP_
