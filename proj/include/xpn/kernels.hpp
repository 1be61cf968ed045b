// include/xpn/kernels.hpp

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

#ifndef XPN_KERNELS_HPP_
#define XPN_KERNELS_HPP_

#include <cstddef>
#include <span>

// Dense row-major kernels used by the autodiff ops. Each kernel exists twice:
// a plain serial reference and an OpenMP version that splits the outer row
// loop. Both accumulate every output element in the same index order, so the
// two produce bitwise-identical results; tests rely on that.

namespace xpn::kernels {

struct GemmDims {
  std::size_t m, k, n;
};

namespace serial {
// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate);
// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate);
// Row normalization with additive eps, applied independently to each column
// block of every row. `blocks` lists block widths summing to cols; an empty
// list means one block spanning the row.
void psi_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> blocks,
              double eps, std::span<const double> in, std::span<double> out);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out);
}  // namespace serial

namespace omp {
void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate);
void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate);
void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate);
void psi_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> blocks,
              double eps, std::span<const double> in, std::span<double> out);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out);
}  // namespace omp

// Dispatchers: pick the OpenMP path when the work is large enough to pay for
// a parallel region and we are not already inside one.
void gemm_nn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate = false);
void gemm_nt(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate = false);
void gemm_tn(GemmDims d, std::span<const double> a, std::span<const double> b,
             std::span<double> c, bool accumulate = false);
void psi_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> blocks,
              double eps, std::span<const double> in, std::span<double> out);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,
                  std::span<double> out);

// Minimum multiply-add count before the dispatcher goes parallel.
inline constexpr std::size_t kParallelFlops = 1u << 16;

int max_threads();

}  // namespace xpn::kernels

#endif  // XPN_KERNELS_HPP_
