// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cachefed/feature_space.hpp"
#include "cachefed/numerics.hpp"

namespace cachefed {

inline constexpr double kDefaultAlpha = 0.5;
inline constexpr double kDefaultBeta = 1.0;

// Key-value cache adapter over a frozen zero-shot head.
//
//   keys   W1 : C x M  (trainable; column j is the feature of cached sample j)
//   values W2 : num_classes x M  (frozen one-hot labels of the cached samples)
//
// W2 is held privately together with the label vector it encodes; nothing
// after construction can modify it.
class CacheModel {
 public:
  CacheModel() = default;
  CacheModel(Matrix keys, std::vector<Label> value_labels, std::size_t num_classes,
             double alpha, double beta);

  const Matrix& keys() const noexcept { return keys_; }
  Matrix& mutable_keys() noexcept { return keys_; }
  const Matrix& values() const noexcept { return values_; }
  std::span<const Label> value_labels() const noexcept { return value_labels_; }

  std::size_t feature_dim() const noexcept { return keys_.rows(); }
  std::size_t cache_size() const noexcept { return keys_.cols(); }
  std::size_t num_classes() const noexcept { return values_.rows(); }

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

  CacheModel with_keys(Matrix keys) const;

  friend bool operator==(const CacheModel&, const CacheModel&) = default;

 private:
  Matrix keys_;
  Matrix values_;
  std::vector<Label> value_labels_;
  double alpha_ = kDefaultAlpha;
  double beta_ = kDefaultBeta;
};

struct LogitsBundle {
  Matrix zero_shot;  // batch x num_classes: f W_text^T
  Matrix adapter;    // batch x num_classes: exp(-beta (1 - f W1)) W2^T
  Matrix fused;      // zero_shot + alpha * adapter
};

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad_keys;  // C x M
};

// Builds the cache from an exactly class-balanced dataset; column order follows
// dataset order. Throws BalanceError listing per-class counts otherwise.
CacheModel init_cache(const FeatureDataset& balanced, std::size_t num_classes,
                      double alpha = kDefaultAlpha, double beta = kDefaultBeta);

// Same value layout as `init_cache` but with keys drawn uniformly on the unit
// sphere; the "no synthetic data" ablation.
CacheModel init_random_cache(const FeatureDataset& balanced, std::size_t num_classes,
                             std::uint64_t seed, double alpha = kDefaultAlpha,
                             double beta = kDefaultBeta);

LogitsBundle compute_logits(const CacheModel& model, const TextHead& head,
                            const Matrix& batch);

// Mean cross-entropy of softmax(fused) and its exact gradient with respect to
// the keys. With P = softmax(fused), Y one-hot labels and B the batch size:
//   dF = (P - Y) / B
//   dA = alpha * dF * W2            (affinity gradient, B x M)
//   dW1 = beta * X^T (A .* dA)      where A = exp(-beta (1 - X W1))
LossAndGrad loss_and_grad_w1(const CacheModel& model, const TextHead& head,
                             const Matrix& batch, std::span<const Label> labels);

// Scratch buffers reused across calls of loss_and_grad_rows.
struct GradWorkspace {
  std::vector<double> affinity;  // rows x M, becomes A .* dA
  std::vector<double> logits;    // rows x num_classes, becomes dF
  std::vector<double> adapter;   // num_classes
};

// loss_and_grad_w1 restricted to the given rows of (features, labels), writing
// the gradient into `grad` (reshaped as needed). Same arithmetic, and hence
// the same bits, as gathering the rows and calling loss_and_grad_w1.
double loss_and_grad_rows(const CacheModel& model, const TextHead& head,
                          const Matrix& features, std::span<const Label> labels,
                          std::span<const std::size_t> rows, Matrix& grad,
                          GradWorkspace& ws);

// Forward and backward pass up to the key gradient's right factor: returns the
// mean loss over `rows` and leaves Z = A .* dA (rows x M) in ws.affinity, so
// that dW1 = beta * X_rows^T Z.
double cache_backward(const CacheModel& model, const TextHead& head, const Matrix& features,
                      std::span<const Label> labels, std::span<const std::size_t> rows,
                      GradWorkspace& ws);

// Fused SGD step after cache_backward: for every key entry
//   g = beta * (X_rows^T Z) + prox_mu * (W1 - anchor);  W1 -= lr * g
// with the same operation order as materializing the gradient first. `anchor`
// is ignored when prox_mu == 0.
void apply_key_update(Matrix& keys, const Matrix& features, std::span<const std::size_t> rows,
                      const GradWorkspace& ws, double beta, double lr, double prox_mu,
                      const Matrix& anchor);

CacheModel sgd_step(const CacheModel& model, const Matrix& grad_keys, double lr);
// keys -= lr * grad, in place.
void sgd_step_inplace(Matrix& keys, const Matrix& grad_keys, double lr);

// Fraction of samples whose fused argmax (lowest index on ties) matches.
double evaluate(const CacheModel& model, const TextHead& head, const FeatureDataset& test);

// Argmax per row, lowest index wins ties.
std::vector<Label> argmax_rows(const Matrix& m);

// CFM1 checkpoint: "CFM1" | u32 version | u32 C | u32 M | u32 num_classes |
// f64 alpha | f64 beta | W1 (C x M f64, row-major) | M x u32 value labels.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const CacheModel& model);
CacheModel parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const CacheModel& model);
CacheModel load_checkpoint(const std::filesystem::path& path);

}  // namespace cachefed
