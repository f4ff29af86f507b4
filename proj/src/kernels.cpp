// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cachefed::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

void softmax_row(std::span<const double> in, std::span<double> out) {
  double mx = in[0];
  for (double v : in) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
}

}  // namespace

namespace serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const auto br = b.row(p);
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  // out(i, j) = sum_p a(p, i) * b(p, j)
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(p, i);
      const auto br = b.row(p);
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void softmax_rows(const Matrix& m, Matrix& out) {
  for (std::size_t i = 0; i < m.rows(); ++i) softmax_row(m.row(i), out.row(i));
}

}  // namespace serial

namespace parallel {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const bool big = n * k * m >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const auto br = b.row(p);
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  const bool big = n * k * m >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < n; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  const bool big = n * k * m >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(p, i);
      const auto br = b.row(p);
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void softmax_rows(const Matrix& m, Matrix& out) {
  const bool big = m.size() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < m.rows(); ++i) {
    softmax_row(m.row(i), out.row(i));
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
  if (n <= 0) n = omp_get_num_procs();
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace cachefed::kernels
