// include/xpn/optimizer.hpp

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

#ifndef XPN_OPTIMIZER_HPP_
#define XPN_OPTIMIZER_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "xpn/autograd.hpp"

namespace xpn {

struct RAdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

struct RAdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

// rho_inf = 2 / (1 - beta2) - 1 and rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t).
double radam_rho(std::size_t t, double beta2);
// Variance rectification term, defined for rho_t > 4.
double radam_rectification(std::size_t t, double beta2);

// One update of every parameter from Parameter::grad. When rho_t <= 4 the
// step is lr * m_hat (momentum only); otherwise
// lr * r_t * m_hat / (sqrt(v_hat) + eps).
void radam_step(std::span<Parameter* const> params, RAdamState& state, double lr, const RAdamConfig& cfg = {});

}  // namespace xpn

#endif  // XPN_OPTIMIZER_HPP_
