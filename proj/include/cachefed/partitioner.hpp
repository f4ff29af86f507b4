// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cachefed/feature_space.hpp"

namespace cachefed {

enum class PartitionScheme { kIid, kDirichlet, kPathological };

// "iid" | "dir" | "pat" (also accepts "dirichlet" / "pathological").
PartitionScheme parse_scheme(std::string_view s);
std::string_view scheme_tag(PartitionScheme s);

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::kIid;
  std::uint32_t num_clients = 10;
  double dirichlet_alpha = 0.1;
  std::uint64_t seed = 0;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

// Disjoint cover of the dataset's sample indices. Dirichlet partitions may
// leave clients empty; those keep their slot with n_k = 0.
struct Partition {
  std::vector<std::vector<std::size_t>> shards;

  std::size_t num_clients() const noexcept { return shards.size(); }
  std::size_t client_size(std::size_t k) const { return shards.at(k).size(); }
  std::vector<std::size_t> sizes() const;
  std::size_t total() const;

  friend bool operator==(const Partition&, const Partition&) = default;
};

// iid: per class, samples dealt round-robin over clients starting from the
//      highest client id; per-client per-class counts differ by at most one.
// dirichlet: per class, proportions ~ Dir(alpha * 1) and every sample of the
//      class is assigned by an independent categorical draw.
// pathological: classes split into num_clients contiguous groups, remainder
//      classes to the lowest-index clients; each client owns all samples of
//      its classes.
Partition partition(const FeatureDataset& dataset, std::size_t num_classes,
                    const PartitionSpec& spec);

// Throws unless shards are pairwise disjoint and cover [0, n).
void check_disjoint_cover(const Partition& p, std::size_t n);

struct HeterogeneityReport {
  // histograms[k][c] = samples of class c held by client k
  std::vector<std::vector<std::size_t>> histograms;
  // Earth mover's distance between each client's class distribution and the
  // global one, under the 0/1 ground metric on class labels (equal to total
  // variation distance). Empty clients report 0.
  std::vector<double> emd;
  double max_emd = 0.0;
};

HeterogeneityReport heterogeneity_report(const Partition& p, const FeatureDataset& dataset,
                                         std::size_t num_classes);

// Text form: one line per client, "client_id: idx,idx,...".
std::string format_partition(const Partition& p);
Partition parse_partition(std::string_view text);
// JSON sidecar {"scheme":..., "num_clients":..., "n_k":[...], "n":...}
std::string partition_sidecar_json(const Partition& p, const PartitionSpec& spec);

}  // namespace cachefed
