// tests/oracles.hpp

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

#ifndef XPN_TESTS_ORACLES_HPP_
#define XPN_TESTS_ORACLES_HPP_

// Independent scalar-loop re-derivations of the expansion equations. Nothing
// here calls the library kernels or the tape; tests compare the production
// path against these.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "xpn/tensor.hpp"

namespace xpn::oracle {

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t z = 0; z < a.cols(); ++z) s += a.at(i, z) * b.at(z, j);
      c.at(i, j) = s;
    }
  return c;
}

inline Tensor naive_transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// H_E: L x (L * N_E), row i holds ones over columns [i * N_E, (i + 1) * N_E).
inline Tensor materialize_h(std::size_t length, std::size_t expansion) {
  Tensor h({length, length * expansion});
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t k = 0; k < expansion; ++k) h.at(i, i * expansion + k) = 1.0;
  return h;
}

// I_E: N_E x (L * N_E), L identity blocks side by side.
inline Tensor materialize_i(std::size_t length, std::size_t expansion) {
  Tensor m({expansion, length * expansion});
  for (std::size_t l = 0; l < length; ++l)
    for (std::size_t k = 0; k < expansion; ++k) m.at(k, l * expansion + k) = 1.0;
  return m;
}

// (C^T H_E)^T + (E^T I_E)^T, evaluated literally.
inline Tensor materialized_dynamic_queries(const Tensor& c, const Tensor& e) {
  const std::size_t L = c.rows(), ne = e.rows();
  Tensor lhs = naive_transpose(naive_matmul(naive_transpose(c), materialize_h(L, ne)));
  Tensor rhs = naive_transpose(naive_matmul(naive_transpose(e), materialize_i(L, ne)));
  Tensor out(lhs.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lhs[i] + rhs[i];
  return out;
}

struct ExpansionInputs {
  Tensor x;       // L x d
  Tensor query;   // T x d
  Tensor bias;    // T x d
  Tensor w_key, w_value1, w_value2, w_select;
  std::vector<std::size_t> groups;  // backward normalization blocks
  double eps = 1e-6;
  // When > 0, apply the causal mask with this expansion factor (T = L * N_E).
  std::size_t causal_expansion = 0;
};

// Scalar loops over the forward expansion, per-group backward retrieval and
// sigmoid selection.
inline Tensor expansion(const ExpansionInputs& in) {
  const std::size_t L = in.x.rows(), d = in.x.cols(), T = in.query.rows();
  const Tensor K = naive_matmul(in.x, in.w_key);
  const Tensor V[2] = {naive_matmul(in.x, in.w_value1), naive_matmul(in.x, in.w_value2)};
  const Tensor S = naive_matmul(in.x, in.w_select);
  // forward: expanded row r (block r / N_E) sees key j iff j <= block
  auto visible = [&](std::size_t row, std::size_t key) {
    return in.causal_expansion == 0 || key <= row / in.causal_expansion;
  };
  // backward: output row t sees expanded row r iff block <= t
  auto retrievable = [&](std::size_t row, std::size_t t) {
    return in.causal_expansion == 0 || row / in.causal_expansion <= t;
  };
  std::vector<double> m(T * L);
  for (std::size_t r = 0; r < T; ++r)
    for (std::size_t j = 0; j < L; ++j) {
      double s = 0.0;
      for (std::size_t z = 0; z < d; ++z) s += in.query.at(r, z) * K.at(j, z);
      m[r * L + j] = s / std::sqrt(static_cast<double>(d));
    }
  const double n_groups = static_cast<double>(in.groups.size());
  Tensor back[2] = {Tensor({L, d}), Tensor({L, d})};
  for (int path = 0; path < 2; ++path) {
    const double sign = path == 0 ? -1.0 : 1.0;  // (-1)^i for i = 1, 2
    // forward: T x d
    Tensor f({T, d});
    for (std::size_t r = 0; r < T; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < L; ++j)
        if (visible(r, j)) total += std::max(0.0, sign * m[r * L + j]);
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j)
          if (visible(r, j)) acc += std::max(0.0, sign * m[r * L + j]) / (total + in.eps) * V[path].at(j, c);
        f.at(r, c) = acc + in.bias.at(r, c);
      }
    }
    // backward, one normalization per group block of columns
    for (std::size_t t = 0; t < L; ++t) {
      std::size_t off = 0;
      for (std::size_t g : in.groups) {
        double total = 0.0;
        for (std::size_t r = off; r < off + g; ++r)
          if (retrievable(r, t)) total += std::max(0.0, sign * m[r * L + t]);
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0.0;
          for (std::size_t r = off; r < off + g; ++r)
            if (retrievable(r, t)) acc += std::max(0.0, sign * m[r * L + t]) / (total + in.eps) * f.at(r, c);
          back[path].at(t, c) += acc / n_groups;
        }
        off += g;
      }
    }
  }
  Tensor out({L, d});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double sg = 1.0 / (1.0 + std::exp(-S.at(i, c)));
      out.at(i, c) = sg * back[0].at(i, c) + (1.0 - sg) * back[1].at(i, c);
    }
  return out;
}

// Biased-variance layer normalization with per-column affine.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  Tensor y(x.shape());
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    var /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) y.at(i, j) = gamma[j] * (x.at(i, j) - mean) / std::sqrt(var + eps) + beta[j];
  }
  return y;
}

inline Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                           const Tensor& b2) {
  Tensor h = naive_matmul(x, w1);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) h.at(i, j) = std::max(0.0, h.at(i, j) + b1[j]);
  Tensor y = naive_matmul(h, w2);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += b2[j];
  return y;
}

// Multi-head attention, one head at a time with explicit softmax loops.
inline Tensor cross_attention(const Tensor& y, const Tensor& x, const Tensor& wq, const Tensor& wk,
                              const Tensor& wv, const Tensor& wo, std::size_t heads) {
  const Tensor Q = naive_matmul(y, wq), K = naive_matmul(x, wk), V = naive_matmul(x, wv);
  const std::size_t d = wq.cols(), dh = d / heads, M = y.rows(), N = x.rows();
  Tensor cat({M, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < M; ++i) {
      std::vector<double> s(N);
      double mx = -1e300;
      for (std::size_t j = 0; j < N; ++j) {
        double acc = 0.0;
        for (std::size_t z = 0; z < dh; ++z) acc += Q.at(i, h * dh + z) * K.at(j, h * dh + z);
        s[j] = acc / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double total = 0.0;
      for (auto& v : s) total += (v = std::exp(v - mx));
      for (std::size_t z = 0; z < dh; ++z) {
        double acc = 0.0;
        for (std::size_t j = 0; j < N; ++j) acc += s[j] / total * V.at(j, h * dh + z);
        cat.at(i, h * dh + z) = acc;
      }
    }
  return naive_matmul(cat, wo);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

}  // namespace xpn::oracle

#endif  // XPN_TESTS_ORACLES_HPP_
