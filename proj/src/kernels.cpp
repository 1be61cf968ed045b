// src/kernels.cpp

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

#include "xpn/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace xpn::kernels {

namespace {

// Per-row bodies shared by the serial and OpenMP variants. Keeping a single
// body is what makes the two paths bitwise identical.

inline void gemm_nn_row(GemmDims d, const double* a, const double* b, double* c,
                        bool accumulate, std::size_t i) {
  double* ci = c + i * d.n;
  if (!accumulate)
    for (std::size_t j = 0; j < d.n; ++j) ci[j] = 0.0;
  const double* ai = a + i * d.k;
  for (std::size_t z = 0; z < d.k; ++z) {
    const double av = ai[z];
    const double* bz = b + z * d.n;
    for (std::size_t j = 0; j < d.n; ++j) ci[j] += av * bz[j];
  }
}

inline void gemm_nt_row(GemmDims d, const double* a, const double* b, double* c,
                        bool accumulate, std::size_t i) {
  const double* ai = a + i * d.k;
  double* ci = c + i * d.n;
  for (std::size_t j = 0; j < d.n; ++j) {
    const double* bj = b + j * d.k;
    double s = 0.0;
    for (std::size_t z = 0; z < d.k; ++z) s += ai[z] * bj[z];
    ci[j] = accumulate ? ci[j] + s : s;
  }
}

inline void gemm_tn_row(GemmDims d, const double* a, const double* b, double* c,
                        bool accumulate, std::size_t i) {
  double* ci = c + i * d.n;
  if (!accumulate)
    for (std::size_t j = 0; j < d.n; ++j) ci[j] = 0.0;
  for (std::size_t z = 0; z < d.k; ++z) {
    const double av = a[z * d.m + i];
    const double* bz = b + z * d.n;
    for (std::size_t j = 0; j < d.n; ++j) ci[j] += av * bz[j];
  }
}

inline void psi_row(std::size_t cols, std::span<const std::size_t> blocks, double eps,
                    const double* in, double* out) {
  auto normalize = [&](std::size_t begin, std::size_t width) {
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += in[begin + j];
    const double denom = s + eps;
    for (std::size_t j = 0; j < width; ++j) out[begin + j] = in[begin + j] / denom;
  };
  if (blocks.empty()) {
    normalize(0, cols);
    return;
  }
  std::size_t off = 0;
  for (auto w : blocks) {
    normalize(off, w);
    off += w;
  }
}

inline void softmax_row(std::size_t cols, const double* in, double* out) {
  double mx = in[0];
  for (std::size_t j = 1; j < cols; ++j) mx = in[j] > mx ? in[j] : mx;
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    s += out[j];
  }
  for (std::size_t j = 0; j < cols; ++j) out[j] /= s;
}

bool in_parallel() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return true;
#endif
}

bool go_parallel(std::size_t work) {
  return work >= kParallelFlops && max_threads() > 1 && !in_parallel();
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_nn_row(d, a.data(), b.data(), c.data(), accumulate, i);
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_nt_row(d, a.data(), b.data(), c.data(), accumulate, i);
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_tn_row(d, a.data(), b.data(), c.data(), accumulate, i);
}

void psi_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> blocks,
              double eps, std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < rows; ++i)
    psi_row(cols, blocks, eps, in.data() + i * cols, out.data() + i * cols);
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out) {
  for (std::size_t i = 0; i < rows; ++i)
    softmax_row(cols, in.data() + i * cols, out.data() + i * cols);
}

}  // namespace serial

namespace omp {

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_nn_row(d, a.data(), b.data(), c.data(), accumulate, static_cast<std::size_t>(i));
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_nt_row(d, a.data(), b.data(), c.data(), accumulate, static_cast<std::size_t>(i));
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_tn_row(d, a.data(), b.data(), c.data(), accumulate, static_cast<std::size_t>(i));
}

void psi_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> blocks,
              double eps, std::span<const double> in, std::span<double> out) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < r; ++i)
    psi_row(cols, blocks, eps, in.data() + i * cols, out.data() + i * cols);
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < r; ++i)
    softmax_row(cols, in.data() + i * cols, out.data() + i * cols);
}

}  // namespace omp

void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  if (go_parallel(d.m * d.k * d.n))
    omp::gemm_nn(d, a, b, c, accumulate);
  else
    serial::gemm_nn(d, a, b, c, accumulate);
}

void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  if (go_parallel(d.m * d.k * d.n))
    omp::gemm_nt(d, a, b, c, accumulate);
  else
    serial::gemm_nt(d, a, b, c, accumulate);
}

void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate) {
  if (go_parallel(d.m * d.k * d.n))
    omp::gemm_tn(d, a, b, c, accumulate);
  else
    serial::gemm_tn(d, a, b, c, accumulate);
}

void psi_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> blocks,
              double eps, std::span<const double> in, std::span<double> out) {
  if (go_parallel(rows * cols * 8))
    omp::psi_rows(rows, cols, blocks, eps, in, out);
  else
    serial::psi_rows(rows, cols, blocks, eps, in, out);
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out) {
  if (go_parallel(rows * cols * 32))
    omp::softmax_rows(rows, cols, in, out);
  else
    serial::softmax_rows(rows, cols, in, out);
}

}  // namespace xpn::kernels
