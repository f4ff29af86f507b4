// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/feature_space.hpp"

#include <cmath>
#include <set>

#include "cachefed/error.hpp"
#include "cachefed/io.hpp"
#include "cachefed/rng.hpp"

namespace cachefed {

namespace {

constexpr std::string_view kPlaceholder = "[CLASS]";
constexpr char kMagic[4] = {'C', 'F', 'F', '1'};

// Stream tags for derive_seed; each world component draws from its own stream
// so changing e.g. the train size leaves centers untouched.
enum StreamTag : std::uint64_t {
  kCenters = 1,
  kSyntheticCenters,
  kTextHead,
  kTrain,
  kTest,
  kSynthetic,
};

void normalize(std::span<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  if (!(ss > 0.0)) throw DegenerateInputError("zero vector in world generation");
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
}

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  normalize(v);
  return v;
}

// normalize(center + scale * g / sqrt(dim)), quantized through f32 so that the
// on-disk representation reproduces it exactly.
void noisy_sample(Rng& rng, std::span<const double> center, double scale,
                  std::span<double> out) {
  const double s = scale / std::sqrt(static_cast<double>(center.size()));
  for (std::size_t j = 0; j < center.size(); ++j) {
    out[j] = center[j] + s * rng.normal();
  }
  normalize(out);
  for (double& x : out) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

std::string ClassCatalog::prompt_for(std::size_t cls) const {
  std::string out = prompt_template;
  const auto pos = out.find(kPlaceholder);
  if (pos != std::string::npos) {
    out.replace(pos, kPlaceholder.size(), class_names.at(cls));
  }
  return out;
}

void ClassCatalog::validate() const {
  std::set<std::string> seen;
  for (const auto& n : class_names) {
    if (n.empty()) throw ValidationError("empty class name");
    if (!seen.insert(n).second) throw ValidationError("duplicate class name '" + n + "'");
  }
  if (prompt_template.find(kPlaceholder) == std::string::npos) {
    throw ValidationError("prompt template lacks [CLASS]: '" + prompt_template + "'");
  }
}

ClassCatalog make_catalog(std::size_t num_classes) {
  ClassCatalog c;
  c.class_names.reserve(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) {
    c.class_names.push_back("class_" + std::to_string(i));
  }
  return c;
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> indices) const {
  FeatureDataset out;
  out.source_tag = source_tag;
  out.features = Matrix(indices.size(), feature_dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw ValidationError("subset index out of range");
    const auto from = features.row(src);
    std::copy(from.begin(), from.end(), out.features.row(i).begin());
    out.labels.push_back(labels[src]);
  }
  return out;
}

std::vector<std::size_t> FeatureDataset::class_counts(std::size_t num_classes) const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (Label l : labels) {
    if (l >= num_classes) throw LabelError("label " + std::to_string(l) + " >= " + std::to_string(num_classes));
    ++counts[l];
  }
  return counts;
}

void FeatureDataset::validate(std::size_t num_classes, double tol) const {
  if (features.rows() != labels.size()) {
    throw ShapeError(std::to_string(features.rows()) + " feature rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw LabelError("sample " + std::to_string(i) + " has label " +
                       std::to_string(labels[i]) + " >= " + std::to_string(num_classes));
    }
    double ss = 0.0;
    for (double v : features.row(i)) ss += v * v;
    if (std::abs(std::sqrt(ss) - 1.0) > tol) {
      throw ValidationError("sample " + std::to_string(i) + " is not unit norm");
    }
  }
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
  if (shots_per_class < 1) throw ValidationError("shots_per_class must be >= 1");
  if (feature_dim < 2) throw ValidationError("feature_dim must be >= 2");
  if (!(class_separation >= 0.0) || !(noise_scale >= 0.0) || !(domain_gap >= 0.0) ||
      !(text_noise >= 0.0)) {
    throw ValidationError("separation, noise, gap and text noise must be nonnegative");
  }
  if (test_per_class < 1) throw ValidationError("test_per_class must be >= 1");
}

World generate_world(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n_cls = spec.num_classes, dim = spec.feature_dim;
  World w;
  w.catalog = make_catalog(n_cls);

  Rng center_rng(derive_seed(spec.seed, kCenters));
  const auto shared = random_unit(center_rng, dim);
  w.real_centers = Matrix(n_cls, dim);
  for (std::size_t c = 0; c < n_cls; ++c) {
    const auto u = random_unit(center_rng, dim);
    auto row = w.real_centers.row(c);
    for (std::size_t j = 0; j < dim; ++j) row[j] = shared[j] + spec.class_separation * u[j];
    normalize(row);
  }

  // Rotate each center by domain_gap radians inside the plane spanned by the
  // center and a random direction orthogonal to it.
  Rng gap_rng(derive_seed(spec.seed, kSyntheticCenters));
  Matrix synth_centers(n_cls, dim);
  for (std::size_t c = 0; c < n_cls; ++c) {
    const auto center = w.real_centers.row(c);
    auto v = random_unit(gap_rng, dim);
    double dot = 0.0;
    for (std::size_t j = 0; j < dim; ++j) dot += v[j] * center[j];
    for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * center[j];
    normalize(v);
    auto row = synth_centers.row(c);
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] = std::cos(spec.domain_gap) * center[j] + std::sin(spec.domain_gap) * v[j];
    }
    normalize(row);
  }

  Rng text_rng(derive_seed(spec.seed, kTextHead));
  w.text_head.weights = Matrix(n_cls, dim);
  for (std::size_t c = 0; c < n_cls; ++c) {
    noisy_sample(text_rng, w.real_centers.row(c), spec.text_noise * spec.noise_scale,
                 w.text_head.weights.row(c));
  }

  const std::size_t n_train = n_cls * spec.train_per_class;
  Rng train_rng(derive_seed(spec.seed, kTrain));
  w.real_train.source_tag = "synthetic";
  w.real_train.features = Matrix(n_train, dim);
  w.real_train.labels.resize(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto label = static_cast<Label>(train_rng.below(n_cls));
    w.real_train.labels[i] = label;
    noisy_sample(train_rng, w.real_centers.row(label), spec.noise_scale,
                 w.real_train.features.row(i));
  }

  const std::size_t n_test = n_cls * spec.test_per_class;
  Rng test_rng(derive_seed(spec.seed, kTest));
  w.real_test.source_tag = "synthetic";
  w.real_test.features = Matrix(n_test, dim);
  w.real_test.labels.resize(n_test);
  for (std::size_t i = 0; i < n_test; ++i) {
    const auto label = static_cast<Label>(i % n_cls);
    w.real_test.labels[i] = label;
    noisy_sample(test_rng, w.real_centers.row(label), spec.noise_scale,
                 w.real_test.features.row(i));
  }

  const std::size_t n_syn = n_cls * spec.shots_per_class;
  Rng syn_rng(derive_seed(spec.seed, kSynthetic));
  w.synthetic_balanced.source_tag = "synthetic";
  w.synthetic_balanced.features = Matrix(n_syn, dim);
  w.synthetic_balanced.labels.resize(n_syn);
  for (std::size_t i = 0; i < n_syn; ++i) {
    const auto label = static_cast<Label>(i / spec.shots_per_class);
    w.synthetic_balanced.labels[i] = label;
    noisy_sample(syn_rng, synth_centers.row(label), spec.noise_scale,
                 w.synthetic_balanced.features.row(i));
  }
  return w;
}

Matrix quantize_f32(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

std::vector<std::uint8_t> encode_features(const FeatureDataset& dataset,
                                          const ClassCatalog& catalog) {
  catalog.validate();
  if (dataset.features.rows() != dataset.labels.size()) {
    throw ShapeError("feature rows and labels disagree");
  }
  io::ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(catalog.size()));
  w.u32(static_cast<std::uint32_t>(dataset.feature_dim()));
  w.u64(dataset.size());
  for (const auto& name : catalog.class_names) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] >= catalog.size()) {
      throw LabelError("sample " + std::to_string(i) + " label out of catalog range");
    }
    w.u32(dataset.labels[i]);
    for (double v : dataset.features.row(i)) w.f32(static_cast<float>(v));
  }
  return w.release();
}

void write_features(const std::filesystem::path& path, const FeatureDataset& dataset,
                    const ClassCatalog& catalog) {
  const auto bytes = encode_features(dataset, catalog);
  io::write_file_atomic(path, bytes);
}

FeatureFile parse_features(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const std::string magic = r.bytes(4, "magic");
  if (magic != std::string_view(kMagic, 4)) throw FormatError(0, "bad magic, expected CFF1");
  const std::uint64_t version_at = r.offset();
  const auto version = r.u32("version");
  if (version != kFeatureFormatVersion) {
    throw FormatError(version_at, "unsupported version " + std::to_string(version));
  }
  const auto n_cls = r.u32("num_classes");
  const auto dim = r.u32("feature_dim");
  const auto n = r.u64("num_samples");

  FeatureFile out;
  out.catalog.class_names.reserve(n_cls);
  for (std::uint32_t c = 0; c < n_cls; ++c) {
    const auto len = r.u32("class name length");
    out.catalog.class_names.push_back(r.bytes(len, "class name"));
  }
  const std::uint64_t record = 4 + 4ULL * dim;
  if (n > r.remaining() / record) {
    throw FormatError(r.offset(), "truncated: header claims " + std::to_string(n) +
                                      " samples, " + std::to_string(r.remaining()) +
                                      " bytes remain");
  }
  out.dataset.source_tag = "extracted";
  out.dataset.features = Matrix(n, dim);
  out.dataset.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t label_at = r.offset();
    const auto label = r.u32("label");
    if (label >= n_cls) {
      throw FormatError(label_at, "label " + std::to_string(label) + " >= num_classes " +
                                      std::to_string(n_cls));
    }
    out.dataset.labels[i] = label;
    auto row = out.dataset.features.row(i);
    for (std::uint32_t j = 0; j < dim; ++j) {
      const std::uint64_t at = r.offset();
      const float v = r.f32("feature");
      if (!std::isfinite(v)) throw FormatError(at, "non-finite feature value");
      row[j] = static_cast<double>(v);
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(r.offset(), std::to_string(r.remaining()) + " trailing bytes");
  }
  return out;
}

FeatureFile read_features(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  auto parsed = parse_features(bytes);
  parsed.dataset.source_tag = "extracted";
  return parsed;
}

void write_text_head(const std::filesystem::path& path, const TextHead& head,
                     const ClassCatalog& catalog) {
  if (head.num_classes() != catalog.size()) {
    throw ShapeError("text head rows do not match catalog size");
  }
  FeatureDataset ds;
  ds.features = head.weights;
  ds.labels.resize(head.num_classes());
  for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.labels[i] = static_cast<Label>(i);
  write_features(path, ds, catalog);
}

TextHead read_text_head(const std::filesystem::path& path, ClassCatalog* catalog) {
  auto parsed = read_features(path);
  const auto n_cls = parsed.catalog.size();
  if (parsed.dataset.size() != n_cls) {
    throw FormatError(16, "text head must carry one sample per class");
  }
  for (std::size_t i = 0; i < n_cls; ++i) {
    if (parsed.dataset.labels[i] != i) {
      throw FormatError(0, "text head sample " + std::to_string(i) + " has label " +
                               std::to_string(parsed.dataset.labels[i]));
    }
  }
  if (catalog) *catalog = parsed.catalog;
  return TextHead{std::move(parsed.dataset.features)};
}

}  // namespace cachefed
