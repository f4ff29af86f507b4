// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/cache_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cachefed/error.hpp"
#include "cachefed/io.hpp"
#include "cachefed/kernels.hpp"
#include "cachefed/rng.hpp"

namespace cachefed {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'M', '1'};

void check_batch(const CacheModel& model, const TextHead& head, const Matrix& batch) {
  if (batch.cols() != model.feature_dim() || head.feature_dim() != model.feature_dim()) {
    throw ShapeError("feature dims disagree: batch " + std::to_string(batch.cols()) +
                     ", keys " + std::to_string(model.feature_dim()) + ", text head " +
                     std::to_string(head.feature_dim()));
  }
  if (head.num_classes() != model.num_classes()) {
    throw ShapeError("text head has " + std::to_string(head.num_classes()) +
                     " classes, cache has " + std::to_string(model.num_classes()));
  }
}

// exp(-beta (1 - X W1)), batch x M
Matrix affinity(const CacheModel& model, const Matrix& batch) {
  Matrix a(batch.rows(), model.cache_size());
  kernels::parallel::gemm_nn(batch, model.keys(), a);
  const double beta = model.beta();
  for (double& v : a.data()) v = std::exp(-beta * (1.0 - v));
  return a;
}

// A W2^T using the one-hot structure of W2. Terms are added in ascending column
// order; the skipped terms are exact zeros, so this equals the dense product.
Matrix adapter_logits(const CacheModel& model, const Matrix& aff) {
  Matrix out(aff.rows(), model.num_classes());
  const auto labels = model.value_labels();
  for (std::size_t i = 0; i < aff.rows(); ++i) {
    const auto a = aff.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < labels.size(); ++j) o[labels[j]] += a[j];
  }
  return out;
}

}  // namespace

CacheModel::CacheModel(Matrix keys, std::vector<Label> value_labels,
                       std::size_t num_classes, double alpha, double beta)
    : keys_(std::move(keys)),
      values_(num_classes, value_labels.size()),
      value_labels_(std::move(value_labels)),
      alpha_(alpha),
      beta_(beta) {
  if (keys_.cols() != value_labels_.size()) {
    throw ShapeError("keys have " + std::to_string(keys_.cols()) + " columns but " +
                     std::to_string(value_labels_.size()) + " value labels");
  }
  if (!(alpha_ >= 0.0) || !(beta_ >= 0.0)) {
    throw ValidationError("alpha and beta must be nonnegative");
  }
  for (std::size_t j = 0; j < value_labels_.size(); ++j) {
    if (value_labels_[j] >= num_classes) {
      throw LabelError("cache column " + std::to_string(j) + " has label " +
                       std::to_string(value_labels_[j]));
    }
    values_(value_labels_[j], j) = 1.0;
  }
  require_finite(keys_, "CacheModel keys");
}

CacheModel CacheModel::with_keys(Matrix keys) const {
  if (keys.rows() != keys_.rows() || keys.cols() != keys_.cols()) {
    throw ShapeError("replacement keys have a different shape");
  }
  CacheModel out = *this;
  out.keys_ = std::move(keys);
  return out;
}

CacheModel init_cache(const FeatureDataset& balanced, std::size_t num_classes,
                      double alpha, double beta) {
  const auto counts = balanced.class_counts(num_classes);
  bool ok = !balanced.labels.empty();
  for (auto c : counts) ok = ok && c == counts.front();
  if (!ok) {
    std::string detail;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      detail += (c ? ", " : "") + std::to_string(c) + ":" + std::to_string(counts[c]);
    }
    throw BalanceError("cache requires equal shots per class, got {" + detail + "}");
  }
  return CacheModel(transpose(balanced.features), balanced.labels, num_classes, alpha, beta);
}

CacheModel init_random_cache(const FeatureDataset& balanced, std::size_t num_classes,
                             std::uint64_t seed, double alpha, double beta) {
  CacheModel base = init_cache(balanced, num_classes, alpha, beta);
  Rng rng(seed);
  Matrix keys(base.feature_dim(), base.cache_size());
  for (std::size_t j = 0; j < keys.cols(); ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < keys.rows(); ++i) {
      keys(i, j) = rng.normal();
      ss += keys(i, j) * keys(i, j);
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t i = 0; i < keys.rows(); ++i) keys(i, j) *= inv;
  }
  return base.with_keys(std::move(keys));
}

LogitsBundle compute_logits(const CacheModel& model, const TextHead& head,
                            const Matrix& batch) {
  check_batch(model, head, batch);
  LogitsBundle out;
  out.zero_shot = Matrix(batch.rows(), model.num_classes());
  kernels::parallel::gemm_nt(batch, head.weights, out.zero_shot);
  out.adapter = adapter_logits(model, affinity(model, batch));
  out.fused = out.zero_shot;
  const double alpha = model.alpha();
  for (std::size_t i = 0; i < out.fused.size(); ++i) {
    out.fused.data()[i] += alpha * out.adapter.data()[i];
  }
  require_finite(out.fused, "compute_logits");
  return out;
}

double cache_backward(const CacheModel& model, const TextHead& head, const Matrix& features,
                      std::span<const Label> labels, std::span<const std::size_t> rows,
                      GradWorkspace& ws) {
  check_batch(model, head, features);
  if (labels.size() != features.rows()) {
    throw ShapeError(std::to_string(features.rows()) + " feature rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (rows.empty()) throw DegenerateInputError("gradient of an empty batch");
  const std::size_t n = rows.size(), dim = model.feature_dim(), m = model.cache_size(),
                    n_cls = model.num_classes();
  const auto value_labels = model.value_labels();
  const Matrix& keys = model.keys();
  const double alpha = model.alpha(), beta = model.beta();
  ws.affinity.assign(n * m, 0.0);
  ws.logits.assign(n * n_cls, 0.0);
  ws.adapter.resize(n_cls);

  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows[i];
    if (r >= features.rows()) throw ValidationError("row index out of range");
    const Label y = labels[r];
    if (y >= n_cls) {
      throw LabelError("label " + std::to_string(y) + " at row " + std::to_string(r) +
                       " outside [0, " + std::to_string(n_cls) + ")");
    }
    const auto x = features.row(r);
    double* a = ws.affinity.data() + i * m;
    double* z = ws.logits.data() + i * n_cls;

    // A = exp(-beta (1 - x W1))
    for (std::size_t p = 0; p < dim; ++p) {
      const double xv = x[p];
      const auto kr = keys.row(p);
      for (std::size_t j = 0; j < m; ++j) a[j] += xv * kr[j];
    }
    for (std::size_t j = 0; j < m; ++j) a[j] = std::exp(-beta * (1.0 - a[j]));

    // fused = x W_text^T + alpha * A W2^T
    for (std::size_t c = 0; c < n_cls; ++c) {
      const auto tr = head.weights.row(c);
      double acc = 0.0;
      for (std::size_t p = 0; p < dim; ++p) acc += x[p] * tr[p];
      z[c] = acc;
    }
    auto& adapter = ws.adapter;
    std::fill(adapter.begin(), adapter.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) adapter[value_labels[j]] += a[j];
    for (std::size_t c = 0; c < n_cls; ++c) z[c] += alpha * adapter[c];

    // softmax, loss, dF = (P - Y) / B
    double mx = z[0];
    for (std::size_t c = 1; c < n_cls; ++c) mx = std::max(mx, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < n_cls; ++c) {
      z[c] = std::exp(z[c] - mx);
      sum += z[c];
    }
    for (std::size_t c = 0; c < n_cls; ++c) z[c] /= sum;
    loss -= std::log(std::max(z[y], std::numeric_limits<double>::min()));
    z[y] -= 1.0;
    for (std::size_t c = 0; c < n_cls; ++c) z[c] *= inv_n;

    // A .* dA with dA(j) = alpha * dF(label_j)
    for (std::size_t j = 0; j < m; ++j) a[j] *= alpha * z[value_labels[j]];
  }
  return loss * inv_n;
}

double loss_and_grad_rows(const CacheModel& model, const TextHead& head,
                          const Matrix& features, std::span<const Label> labels,
                          std::span<const std::size_t> rows, Matrix& grad,
                          GradWorkspace& ws) {
  const double loss = cache_backward(model, head, features, labels, rows, ws);
  const std::size_t n = rows.size(), dim = model.feature_dim(), m = model.cache_size();
  const double beta = model.beta();
  // dW1 = beta * X^T (A .* dA), accumulated over the batch in order.
  if (grad.rows() != dim || grad.cols() != m) grad = Matrix(dim, m);
  for (std::size_t p = 0; p < dim; ++p) {
    auto g = grad.row(p);
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = features(rows[i], p);
      const double* a = ws.affinity.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) g[j] += xv * a[j];
    }
    for (double& v : g) v *= beta;
  }
  require_finite(grad, "loss_and_grad_w1");
  return loss;
}

void apply_key_update(Matrix& keys, const Matrix& features, std::span<const std::size_t> rows,
                      const GradWorkspace& ws, double beta, double lr, double prox_mu,
                      const Matrix& anchor) {
  const std::size_t n = rows.size(), dim = keys.rows(), m = keys.cols();
  if (ws.affinity.size() != n * m) throw ShapeError("workspace does not match the keys");
  const bool prox = prox_mu > 0.0;
  if (prox && (anchor.rows() != dim || anchor.cols() != m)) {
    throw ShapeError("proximal anchor does not match the keys");
  }
  std::vector<double> gbuf(m);
  double* __restrict g = gbuf.data();
  for (std::size_t p = 0; p < dim; ++p) {
    double* __restrict w = keys.row(p).data();
    if (n == 1) {
      // 0 + x * a is exactly x * a, so the single-row case skips the buffer.
      const double xv = features(rows[0], p);
      const double* __restrict a = ws.affinity.data();
      if (prox) {
        const double* __restrict w0 = anchor.row(p).data();
        for (std::size_t j = 0; j < m; ++j) w[j] -= lr * ((xv * a[j]) * beta + prox_mu * (w[j] - w0[j]));
      } else {
        for (std::size_t j = 0; j < m; ++j) w[j] -= lr * ((xv * a[j]) * beta);
      }
      continue;
    }
    std::fill(g, g + m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = features(rows[i], p);
      const double* __restrict a = ws.affinity.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) g[j] += xv * a[j];
    }
    if (prox) {
      const double* __restrict w0 = anchor.row(p).data();
      for (std::size_t j = 0; j < m; ++j) w[j] -= lr * (g[j] * beta + prox_mu * (w[j] - w0[j]));
    } else {
      for (std::size_t j = 0; j < m; ++j) w[j] -= lr * (g[j] * beta);
    }
  }
}

LossAndGrad loss_and_grad_w1(const CacheModel& model, const TextHead& head,
                             const Matrix& batch, std::span<const Label> labels) {
  std::vector<std::size_t> rows(batch.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  LossAndGrad out;
  GradWorkspace ws;
  out.loss = loss_and_grad_rows(model, head, batch, labels, rows, out.grad_keys, ws);
  return out;
}

void sgd_step_inplace(Matrix& keys, const Matrix& grad_keys, double lr) {
  if (keys.rows() != grad_keys.rows() || keys.cols() != grad_keys.cols()) {
    throw ShapeError("gradient shape does not match keys");
  }
  auto k = keys.data();
  const auto g = grad_keys.data();
  for (std::size_t i = 0; i < k.size(); ++i) k[i] -= lr * g[i];
}

CacheModel sgd_step(const CacheModel& model, const Matrix& grad_keys, double lr) {
  Matrix keys = model.keys();
  sgd_step_inplace(keys, grad_keys, lr);
  require_finite(keys, "sgd_step");
  return model.with_keys(std::move(keys));
}

std::vector<Label> argmax_rows(const Matrix& m) {
  std::vector<Label> out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[i] = static_cast<Label>(best);
  }
  return out;
}

double evaluate(const CacheModel& model, const TextHead& head, const FeatureDataset& test) {
  if (test.size() == 0) throw DegenerateInputError("evaluate on empty test set");
  const auto logits = compute_logits(model, head, test.features);
  const auto pred = argmax_rows(logits.fused);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test.labels[i];
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

std::vector<std::uint8_t> encode_checkpoint(const CacheModel& model) {
  io::ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.feature_dim()));
  w.u32(static_cast<std::uint32_t>(model.cache_size()));
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.f64(model.alpha());
  w.f64(model.beta());
  for (double v : model.keys().data()) w.f64(v);
  for (Label l : model.value_labels()) w.u32(l);
  return w.release();
}

CacheModel parse_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4)) {
    throw FormatError(0, "bad magic, expected CFM1");
  }
  const auto version_at = r.offset();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(version_at, "unsupported version " + std::to_string(version));
  }
  const auto dim = r.u32("C");
  const auto m = r.u32("M");
  const auto n_cls = r.u32("num_classes");
  const double alpha = r.f64("alpha");
  const double beta = r.f64("beta");
  if (static_cast<std::uint64_t>(dim) * m * 8 + 4ULL * m > r.remaining()) {
    throw FormatError(r.offset(), "truncated cache payload");
  }
  Matrix keys(dim, m);
  for (double& v : keys.data()) v = r.f64("W1 entry");
  std::vector<Label> labels(m);
  for (auto& l : labels) {
    const auto at = r.offset();
    l = r.u32("W2 label");
    if (l >= n_cls) throw FormatError(at, "value label out of range");
  }
  if (r.remaining() != 0) throw FormatError(r.offset(), "trailing bytes");
  return CacheModel(std::move(keys), std::move(labels), n_cls, alpha, beta);
}

void save_checkpoint(const std::filesystem::path& path, const CacheModel& model) {
  io::write_file_atomic(path, encode_checkpoint(model));
}

CacheModel load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace cachefed
