// src/grad_check.cpp

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

#include "xpn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xpn {

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_error() << " tol=" << tol;
  for (const auto& e : entries)
    if (e.max_rel_error > tol)
      os << "\n  " << e.name << "[" << e.worst_index << "] analytic=" << e.analytic
         << " numeric=" << e.numeric << " rel=" << e.max_rel_error;
  return os.str();
}

double relative_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return diff / denom;
}

namespace {

double eval_loss(const LossBuilder& f) {
  Tape tape(false);
  Var loss = f(tape);
  const Tensor& v = loss.value();
  if (v.size() != 1) throw DimensionError("grad_check: loss must be scalar");
  if (!std::isfinite(v[0])) throw Error("grad_check: loss is not finite");
  return v[0];
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double h, double tol) {
  if (!(h > 0.0)) throw ConfigError("grad_check: h must be positive");
  GradCheckReport report;
  report.tol = tol;

  Tape tape;
  Var loss = f(tape);
  if (!std::isfinite(loss.value()[0])) throw Error("grad_check: loss is not finite");
  tape.backward(loss);

  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    const Tensor* g = tape.param_grad(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double fp = eval_loss(f);
      p->value[i] = orig - h;
      const double fm = eval_loss(f);
      p->value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = g ? (*g)[i] : 0.0;
      const double err = relative_error(analytic, numeric);
      if (err > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_error > tol) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace xpn
