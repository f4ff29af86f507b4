// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels on shapes from a training round:
// a batch of features against C x (N * shots) cache keys.

#include <benchmark/benchmark.h>

#include "cachefed/kernels.hpp"
#include "cachefed/rng.hpp"

namespace {

using cachefed::Matrix;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  cachefed::Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Args: batch rows, feature dim, cache size.
template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const Matrix a = random_matrix(n, c, 1), b = random_matrix(c, m, 2);
  Matrix out(n, m);
  for (auto _ : state) {
    Gemm(a, b, out);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * c * m));
}

template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void BM_GemmTN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const Matrix a = random_matrix(n, c, 3), b = random_matrix(n, m, 4);
  Matrix out(c, m);
  for (auto _ : state) {
    Gemm(a, b, out);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * c * m));
}

template <void (*Softmax)(const Matrix&, Matrix&)>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const Matrix a = random_matrix(n, k, 5);
  Matrix out(n, k);
  for (auto _ : state) {
    Softmax(a, out);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * k));
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({1, 64, 160})->Args({64, 64, 160})->Args({1000, 64, 160})->Args({256, 512, 1600});
}

void softmax_shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 10})->Args({1000, 10})->Args({10000, 100});
}

BENCHMARK_TEMPLATE(BM_GemmNN, cachefed::kernels::serial::gemm_nn)->Apply(gemm_shapes);
BENCHMARK_TEMPLATE(BM_GemmNN, cachefed::kernels::parallel::gemm_nn)->Apply(gemm_shapes);
BENCHMARK_TEMPLATE(BM_GemmTN, cachefed::kernels::serial::gemm_tn)->Apply(gemm_shapes);
BENCHMARK_TEMPLATE(BM_GemmTN, cachefed::kernels::parallel::gemm_tn)->Apply(gemm_shapes);
BENCHMARK_TEMPLATE(BM_Softmax, cachefed::kernels::serial::softmax_rows)->Apply(softmax_shapes);
BENCHMARK_TEMPLATE(BM_Softmax, cachefed::kernels::parallel::softmax_rows)->Apply(softmax_shapes);

}  // namespace

BENCHMARK_MAIN();
