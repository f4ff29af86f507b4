// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/numerics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cachefed/error.hpp"
#include "cachefed/kernels.hpp"
#include "test_util.hpp"

namespace cachefed {
namespace {

using testing::random_matrix;

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += (long double)a(i, k) * b(k, j);
      out(i, j) = static_cast<double>(s);
    }
  return out;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m{{1.5, -2.0}, {0.25, 4.0}};
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, HandArithmetic) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{1}, {1}};
  EXPECT_EQ(matmul(a, b), (Matrix{{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  const Matrix a = random_matrix(7, 5, rng);
  const Matrix b = random_matrix(5, 3, rng);
  const Matrix got = matmul(a, b);
  const Matrix want = triple_loop(a, b);
  for (std::size_t i = 0; i < got.size(); ++i)
    EXPECT_NEAR(got.data()[i], want.data()[i], 1e-13);
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(12);
  const Matrix a = random_matrix(6, 4, rng);
  const Matrix b = random_matrix(5, 4, rng);
  const Matrix c = random_matrix(6, 3, rng);
  EXPECT_LT(relative_frobenius_error(matmul_nt(a, b), triple_loop(a, transpose(b))), 1e-14);
  EXPECT_LT(relative_frobenius_error(matmul_tn(a, c), triple_loop(transpose(a), c)), 1e-14);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(matmul_nt(Matrix(2, 3), Matrix(2, 2)), ShapeError);
  EXPECT_THROW(matmul_tn(Matrix(2, 3), Matrix(3, 2)), ShapeError);
}

TEST(Matmul, Associative) {
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(6), m = 1 + rng.below(6), p = 1 + rng.below(6),
                      q = 1 + rng.below(6);
    const Matrix a = random_matrix(n, m, rng);
    const Matrix b = random_matrix(m, p, rng);
    const Matrix c = random_matrix(p, q, rng);
    EXPECT_LT(relative_frobenius_error(matmul(matmul(a, b), c), matmul(a, matmul(b, c))),
              1e-9);
  }
}

TEST(Softmax, SymmetricRow) {
  const Matrix p = softmax_rows(Matrix{{0.0, 0.0}});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const Matrix p = softmax_rows(Matrix{{1000.0, 0.0}});
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.0, 1e-15);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  const Matrix p = softmax_rows(Matrix{{1.0, 2.0, 3.0}});
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int j = 0; j < 3; ++j) {
    const long double want = std::exp((long double)(j + 1)) / z;
    EXPECT_LE(std::fabs((long double)p(0, j) - want) / want, 1e-12L);
  }
}

TEST(Softmax, RowsSumToOneIncludingExtremes) {
  Rng rng(14);
  Matrix m(10000, 7);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      m(i, j) = (i % 3 == 0) ? (rng.uniform() * 2000.0 - 1000.0) : rng.normal() * 5.0;
  m(0, 0) = 1000.0;
  m(0, 1) = -1000.0;
  const Matrix p = softmax_rows(m);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      s += v;
    }
    ASSERT_NEAR(s, 1.0, 1e-9) << "row " << i;
  }
}

TEST(CrossEntropy, PerfectPredictionIsZero) {
  const std::vector<Label> y = {1};
  EXPECT_EQ(cross_entropy(Matrix{{0.0, 1.0, 0.0}}, y), 0.0);
}

TEST(CrossEntropy, UniformIsLogN) {
  const std::vector<Label> y = {0, 3};
  EXPECT_NEAR(cross_entropy(Matrix(2, 5, 0.2), y), std::log(5.0), 1e-15);
}

TEST(CrossEntropy, MatchesScalarLoop) {
  Rng rng(15);
  const Matrix p = softmax_rows(random_matrix(4, 6, rng));
  const std::vector<Label> y = {0, 5, 2, 2};
  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i) want -= std::log(p(i, y[i]));
  EXPECT_NEAR(cross_entropy(p, y), want / 4.0, 1e-14);
}

TEST(CrossEntropy, BadLabelsThrow) {
  const std::vector<Label> out_of_range = {3};
  EXPECT_THROW(cross_entropy(Matrix(1, 3, 1.0 / 3), out_of_range), LabelError);
  const std::vector<Label> short_labels = {0};
  EXPECT_THROW(cross_entropy(Matrix(2, 3, 1.0 / 3), short_labels), ShapeError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  const std::size_t batch = 5, classes = 4;
  Matrix logits = random_matrix(batch, classes, rng, 2.0);
  std::vector<Label> y(batch);
  for (auto& l : y) l = static_cast<Label>(rng.below(classes));
  const Matrix p = softmax_rows(logits);
  const double h = 1e-5;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < classes; ++j) {
      const double analytic = (p(i, j) - (y[i] == j ? 1.0 : 0.0)) / batch;
      Matrix up = logits, down = logits;
      up(i, j) += h;
      down(i, j) -= h;
      const double numeric =
          (cross_entropy(softmax_rows(up), y) - cross_entropy(softmax_rows(down), y)) / (2 * h);
      EXPECT_LE(std::fabs(numeric - analytic), 1e-4 * std::max(std::fabs(analytic), 1e-6))
          << i << "," << j;
    }
}

TEST(L2Normalize, ThreeFourFive) {
  const Matrix n = l2_normalize_rows(Matrix{{3.0, 4.0}});
  EXPECT_NEAR(n(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(n(0, 1), 0.8, 1e-15);
}

TEST(L2Normalize, UnitNormsAndIdempotence) {
  Rng rng(17);
  const Matrix n = l2_normalize_rows(random_matrix(5, 8, rng));
  for (std::size_t i = 0; i < n.rows(); ++i) {
    double s = 0.0;
    for (double v : n.row(i)) s += v * v;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-12);
  }
  const Matrix again = l2_normalize_rows(n);
  for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(again.data()[i], n.data()[i], 1e-12);
}

TEST(L2Normalize, ZeroRowThrows) {
  EXPECT_THROW(l2_normalize_rows(Matrix{{1.0, 0.0}, {0.0, 0.0}}), DegenerateInputError);
}

TEST(Matrix, NonFiniteRejected) {
  Matrix m(1, 2);
  m(0, 1) = std::nan("");
  EXPECT_FALSE(m.all_finite());
  EXPECT_THROW(require_finite(m, "test"), NonFiniteError);
}

TEST(Kernels, ParallelBitIdenticalToSerial) {
  Rng rng(18);
  const Matrix a = random_matrix(37, 23, rng);
  const Matrix b = random_matrix(23, 41, rng);
  const Matrix bt = random_matrix(41, 23, rng);
  const Matrix c = random_matrix(37, 19, rng);
  for (int threads : {1, 2, 4}) {
    kernels::set_max_threads(threads);
    Matrix s(37, 41), p(37, 41);
    kernels::serial::gemm_nn(a, b, s);
    kernels::parallel::gemm_nn(a, b, p);
    EXPECT_EQ(s, p);
    kernels::serial::gemm_nt(a, bt, s);
    kernels::parallel::gemm_nt(a, bt, p);
    EXPECT_EQ(s, p);
    s = Matrix(23, 19);
    p = Matrix(23, 19);
    kernels::serial::gemm_tn(a, c, s);
    kernels::parallel::gemm_tn(a, c, p);
    EXPECT_EQ(s, p);
    s = Matrix(37, 23);
    p = Matrix(37, 23);
    kernels::serial::softmax_rows(a, s);
    kernels::parallel::softmax_rows(a, p);
    EXPECT_EQ(s, p);
  }
  kernels::set_max_threads(0);
}

}  // namespace
}  // namespace cachefed
