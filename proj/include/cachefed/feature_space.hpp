// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cachefed/numerics.hpp"

namespace cachefed {

inline constexpr const char* kDefaultPromptTemplate = "a photo of a [CLASS]";

struct ClassCatalog {
  std::vector<std::string> class_names;
  std::string prompt_template = kDefaultPromptTemplate;

  std::size_t size() const noexcept { return class_names.size(); }
  // Template with [CLASS] replaced by the class name.
  std::string prompt_for(std::size_t cls) const;
  // Names non-empty and unique; template contains [CLASS].
  void validate() const;

  friend bool operator==(const ClassCatalog&, const ClassCatalog&) = default;
};

// Catalog named class_0, class_1, ...
ClassCatalog make_catalog(std::size_t num_classes);

// Labeled, L2-normalized feature rows (what a frozen image encoder emits).
struct FeatureDataset {
  Matrix features;  // num_samples x feature_dim
  std::vector<Label> labels;
  std::string source_tag = "synthetic";

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }

  // Gathers the given rows into a new dataset (same tag).
  FeatureDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts(std::size_t num_classes) const;
  // Labels below num_classes; rows unit-norm within `tol`.
  void validate(std::size_t num_classes, double tol = 1e-6) const;

  // Compares content only; source_tag is provenance metadata and is not
  // persisted in CFF1 files.
  friend bool operator==(const FeatureDataset& a, const FeatureDataset& b) {
    return a.features == b.features && a.labels == b.labels;
  }
};

// Per-class text embeddings, one unit row per class in catalog order.
struct TextHead {
  Matrix weights;  // num_classes x feature_dim

  std::size_t num_classes() const noexcept { return weights.rows(); }
  std::size_t feature_dim() const noexcept { return weights.cols(); }

  friend bool operator==(const TextHead&, const TextHead&) = default;
};

// Parameters of the synthetic feature-space world.
//
// Class centers are unit vectors c_k = normalize(shared + class_separation * u_k)
// with a shared direction and per-class random unit directions u_k, so small
// separations give confusable classes. Real samples are
// normalize(center + noise_scale * g / sqrt(C)) with g standard normal.
// Synthetic ("generated") samples use centers rotated by `domain_gap` radians
// toward a random orthogonal direction. Text rows are the real centers
// perturbed with text_noise * noise_scale relative noise.
struct SynthSpec {
  std::uint32_t num_classes = 10;
  std::uint32_t shots_per_class = 16;
  std::uint32_t feature_dim = 64;
  double class_separation = 1.0;
  double noise_scale = 2.0;
  double domain_gap = 0.2;
  double text_noise = 2.0;
  // real_train labels are drawn uniformly at random; real_test is balanced.
  std::uint32_t train_per_class = 800;
  std::uint32_t test_per_class = 100;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

struct World {
  ClassCatalog catalog;
  FeatureDataset real_train;
  FeatureDataset real_test;
  FeatureDataset synthetic_balanced;
  TextHead text_head;
  // Unit class centers of the real domain, row per class.
  Matrix real_centers;
};

World generate_world(const SynthSpec& spec);

// CFF1 binary feature files (little-endian):
//   "CFF1" | u32 version=1 | u32 num_classes | u32 feature_dim | u64 num_samples
//   | per class: u32 name_len, name bytes | per sample: u32 label, dim x f32
// Features are narrowed to f32 on write and widened on read.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

void write_features(const std::filesystem::path& path,
                    const FeatureDataset& dataset, const ClassCatalog& catalog);

struct FeatureFile {
  FeatureDataset dataset;
  ClassCatalog catalog;
};

FeatureFile read_features(const std::filesystem::path& path);
FeatureFile parse_features(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_features(const FeatureDataset& dataset,
                                          const ClassCatalog& catalog);

// Text head uses the same format with sample i carrying label i.
void write_text_head(const std::filesystem::path& path, const TextHead& head,
                     const ClassCatalog& catalog);
TextHead read_text_head(const std::filesystem::path& path,
                        ClassCatalog* catalog = nullptr);

// Rounds every entry through f32, matching what a write/read cycle yields.
Matrix quantize_f32(const Matrix& m);

}  // namespace cachefed
