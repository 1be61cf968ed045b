// bench/bench_kernels.cpp

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

#include <benchmark/benchmark.h>

#include "xpn/kernels.hpp"

namespace k = xpn::kernels;

namespace {

std::vector<double> random_vec(std::size_t n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool kParallel>
void BM_GemmNN(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const k::GemmDims d{n, n, n};
  auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (kParallel)
      k::omp::gemm_nn(d, a, b, c, false);
    else
      k::serial::gemm_nn(d, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool kParallel>
void BM_GemmNT(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const k::GemmDims d{n, n, n};
  auto a = random_vec(n * n), b = random_vec(n * n);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (kParallel)
      k::omp::gemm_nt(d, a, b, c, false);
    else
      k::serial::gemm_nt(d, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

// rows x (5 groups of cols / 5), the block static layout
template <bool kParallel>
void BM_PsiBlocks(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), cols = 960;
  const std::size_t blocks[] = {32, 64, 128, 256, 480};
  auto in = random_vec(rows * cols);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (kParallel)
      k::omp::psi_rows(rows, cols, blocks, 1e-6, in, out);
    else
      k::serial::psi_rows(rows, cols, blocks, 1e-6, in, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool kParallel>
void BM_Softmax(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), cols = 10000;
  auto in = random_vec(rows * cols);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (kParallel)
      k::omp::softmax_rows(rows, cols, in, out);
    else
      k::serial::softmax_rows(rows, cols, in, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmNN<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNN<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNT<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNT<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_PsiBlocks<false>)->Arg(20)->Arg(200);
BENCHMARK(BM_PsiBlocks<true>)->Arg(20)->Arg(200);
BENCHMARK(BM_Softmax<false>)->Arg(5)->Arg(50);
BENCHMARK(BM_Softmax<true>)->Arg(5)->Arg(50);

BENCHMARK_MAIN();
