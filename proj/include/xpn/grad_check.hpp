// include/xpn/grad_check.hpp

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

#ifndef XPN_GRAD_CHECK_HPP_
#define XPN_GRAD_CHECK_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xpn/autograd.hpp"

namespace xpn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // values at worst_index
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 0.0;
  bool passed = true;

  double max_error() const;
  std::string summary() const;
};

// Builds a scalar loss on the given tape from the parameters' current values.
using LossBuilder = std::function<Var(Tape&)>;

// |a - n| / max(|a|, |n|, kGradCheckFloor); zero when both vanish.
inline constexpr double kGradCheckFloor = 1e-8;
double relative_error(double analytic, double numeric);

// Compares tape gradients against central differences (f(p+h) - f(p-h)) / 2h
// for every entry of every listed parameter. Parameter values are restored
// before returning. Throws if the loss is ever non-finite.
GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double h = 1e-5,
                           double tol = 1e-4);

}  // namespace xpn

#endif  // XPN_GRAD_CHECK_HPP_
