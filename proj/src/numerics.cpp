// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cachefed/error.hpp"
#include "cachefed/kernels.hpp"

namespace cachefed {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(const Matrix& m, const char* where) {
  if (!m.all_finite()) {
    throw NonFiniteError(std::string("non-finite entry produced by ") + where);
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  }
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul " + dims(a) + " * " + dims(b));
  }
  Matrix out(a.rows(), b.cols());
  kernels::parallel::gemm_nn(a, b, out);
  require_finite(out, "matmul");
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt " + dims(a) + " * (" + dims(b) + ")^T");
  }
  Matrix out(a.rows(), b.rows());
  kernels::parallel::gemm_nt(a, b, out);
  require_finite(out, "matmul_nt");
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn (" + dims(a) + ")^T * " + dims(b));
  }
  Matrix out(a.cols(), b.cols());
  kernels::parallel::gemm_tn(a, b, out);
  require_finite(out, "matmul_tn");
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  if (m.cols() == 0) return out;
  kernels::parallel::softmax_rows(m, out);
  return out;
}

double cross_entropy(const Matrix& probabilities,
                     std::span<const Label> labels) {
  if (probabilities.rows() != labels.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(probabilities.rows()) +
                     " rows vs " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DegenerateInputError("cross_entropy of empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= probabilities.cols()) {
      throw LabelError("label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " +
                       std::to_string(probabilities.cols()) + ")");
    }
    // Clamp at the smallest normal so an underflowed probability gives a
    // large finite loss instead of +inf.
    const double p = std::max(probabilities(i, labels[i]),
                              std::numeric_limits<double>::min());
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    double ss = 0.0;
    for (double v : r) ss += v * v;
    if (!(ss > 0.0)) {
      throw DegenerateInputError("cannot normalize zero row " +
                                 std::to_string(i));
    }
    const double inv = 1.0 / std::sqrt(ss);
    auto o = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] = r[j] * inv;
  }
  return out;
}

double frobenius_norm(const Matrix& m) {
  double ss = 0.0;
  for (double v : m.data()) ss += v * v;
  return std::sqrt(ss);
}

double relative_frobenius_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("relative_frobenius_error " + dims(a) + " vs " + dims(b));
  }
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    num += d * d;
  }
  const double den = std::max(frobenius_norm(b), 1e-300);
  return std::sqrt(num) / den;
}

}  // namespace cachefed
