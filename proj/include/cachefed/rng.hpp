// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cachefed {

// SplitMix64 finalizer; used to derive independent stream seeds from
// (base seed, tag...) tuples.
std::uint64_t mix64(std::uint64_t x);

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
  std::uint64_t h = mix64(base);
  ((h = mix64(h ^ (static_cast<std::uint64_t>(tags) + 0x9e3779b97f4a7c15ULL))),
   ...);
  return h;
}

// Seeded random stream. The engine is std::mt19937_64 (fully specified by the
// standard); the distributions are implemented here because the standard
// library's distributions are implementation-defined, and reruns must be
// bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  double normal();
  // Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);
  std::vector<double> dirichlet(double concentration, std::size_t k);
  // Index drawn with probability proportional to weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cachefed
