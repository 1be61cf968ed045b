// tests/test_util.hpp

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

#ifndef XPN_TESTS_TEST_UTIL_HPP_
#define XPN_TESTS_TEST_UTIL_HPP_

#include <random>
#include <string>

#include "xpn/autograd.hpp"

namespace xpn::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline Parameter random_param(std::string name, Shape shape, std::mt19937_64& rng, double lo = -2.0,
                              double hi = 2.0) {
  return Parameter(std::move(name), random_tensor(std::move(shape), rng, lo, hi));
}

// Projects an arbitrary-shaped output onto a scalar with fixed random weights,
// so gradient checks exercise every output entry with a distinct weight.
inline Var weighted_sum(Var v, const Tensor& w) { return sum(mul_const(v, w)); }

}  // namespace xpn::testing

#endif  // XPN_TESTS_TEST_UTIL_HPP_
