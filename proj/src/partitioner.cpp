// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/partitioner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cachefed/error.hpp"
#include "cachefed/rng.hpp"

namespace cachefed {

PartitionScheme parse_scheme(std::string_view s) {
  if (s == "iid") return PartitionScheme::kIid;
  if (s == "dir" || s == "dirichlet") return PartitionScheme::kDirichlet;
  if (s == "pat" || s == "pathological") return PartitionScheme::kPathological;
  throw ValidationError("unknown partition scheme '" + std::string(s) +
                        "' (expected iid|dir|pat)");
}

std::string_view scheme_tag(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::kIid:
      return "iid";
    case PartitionScheme::kDirichlet:
      return "dir";
    case PartitionScheme::kPathological:
      return "pat";
  }
  return "?";
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(shards.size());
  for (const auto& s : shards) out.push_back(s.size());
  return out;
}

std::size_t Partition::total() const {
  std::size_t n = 0;
  for (const auto& s : shards) n += s.size();
  return n;
}

Partition partition(const FeatureDataset& dataset, std::size_t num_classes,
                    const PartitionSpec& spec) {
  if (dataset.size() == 0) throw DegenerateInputError("cannot partition an empty dataset");
  if (spec.num_clients < 1) throw ValidationError("num_clients must be >= 1");
  if (!(spec.dirichlet_alpha > 0.0)) throw ValidationError("dirichlet_alpha must be > 0");
  const std::size_t n_clients = spec.num_clients;

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Label l = dataset.labels[i];
    if (l >= num_classes) throw LabelError("sample " + std::to_string(i) + " label out of range");
    by_class[l].push_back(i);
  }

  Partition p;
  p.shards.resize(n_clients);
  switch (spec.scheme) {
    case PartitionScheme::kIid: {
      // Dealt from the last client down, so the remainder of each class lands
      // on the highest-index clients: 16 samples over 10 clients gives clients
      // 0-3 one sample and clients 4-9 two.
      for (const auto& idx : by_class) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
          p.shards[n_clients - 1 - j % n_clients].push_back(idx[j]);
        }
      }
      break;
    }
    case PartitionScheme::kDirichlet: {
      Rng rng(derive_seed(spec.seed, 0xD1));
      for (const auto& idx : by_class) {
        const auto props = rng.dirichlet(spec.dirichlet_alpha, n_clients);
        for (std::size_t i : idx) p.shards[rng.categorical(props)].push_back(i);
      }
      break;
    }
    case PartitionScheme::kPathological: {
      if (n_clients > num_classes) {
        throw InfeasibleError("pathological partition needs num_classes (" +
                              std::to_string(num_classes) + ") >= num_clients (" +
                              std::to_string(n_clients) + ")");
      }
      const std::size_t base = num_classes / n_clients;
      const std::size_t extra = num_classes % n_clients;
      std::size_t cls = 0;
      for (std::size_t k = 0; k < n_clients; ++k) {
        const std::size_t take = base + (k < extra ? 1 : 0);
        for (std::size_t c = 0; c < take; ++c, ++cls) {
          p.shards[k].insert(p.shards[k].end(), by_class[cls].begin(), by_class[cls].end());
        }
      }
      break;
    }
  }
  for (auto& s : p.shards) std::sort(s.begin(), s.end());
  return p;
}

void check_disjoint_cover(const Partition& p, std::size_t n) {
  std::vector<char> seen(n, 0);
  for (std::size_t k = 0; k < p.shards.size(); ++k) {
    for (std::size_t i : p.shards[k]) {
      if (i >= n) throw ValidationError("client " + std::to_string(k) + " holds index " +
                                        std::to_string(i) + " >= " + std::to_string(n));
      if (seen[i]) throw ValidationError("index " + std::to_string(i) + " assigned twice");
      seen[i] = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) throw ValidationError("index " + std::to_string(i) + " unassigned");
  }
}

HeterogeneityReport heterogeneity_report(const Partition& p, const FeatureDataset& dataset,
                                         std::size_t num_classes) {
  HeterogeneityReport r;
  const auto global = dataset.class_counts(num_classes);
  const double n = static_cast<double>(dataset.size());
  for (const auto& shard : p.shards) {
    std::vector<std::size_t> h(num_classes, 0);
    for (std::size_t i : shard) ++h[dataset.labels.at(i)];
    double d = 0.0;
    if (!shard.empty()) {
      const double nk = static_cast<double>(shard.size());
      for (std::size_t c = 0; c < num_classes; ++c) {
        d += std::abs(static_cast<double>(h[c]) / nk - static_cast<double>(global[c]) / n);
      }
      d *= 0.5;
    }
    r.histograms.push_back(std::move(h));
    r.emd.push_back(d);
    r.max_emd = std::max(r.max_emd, d);
  }
  return r;
}

std::string format_partition(const Partition& p) {
  std::string out;
  for (std::size_t k = 0; k < p.shards.size(); ++k) {
    out += std::to_string(k) + ":";
    for (std::size_t j = 0; j < p.shards[k].size(); ++j) {
      out += (j ? "," : " ") + std::to_string(p.shards[k][j]);
    }
    out += "\n";
  }
  return out;
}

Partition parse_partition(std::string_view text) {
  Partition p;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ValidationError("partition line " + std::to_string(line_no) + " lacks ':'");
    }
    std::size_t id = 0;
    std::from_chars(line.data(), line.data() + colon, id);
    if (id != line_no) throw ValidationError("partition client ids must be consecutive");
    std::vector<std::size_t> shard;
    std::string_view rest = line.substr(colon + 1);
    while (!rest.empty()) {
      while (!rest.empty() && (rest.front() == ' ' || rest.front() == ',')) rest.remove_prefix(1);
      if (rest.empty()) break;
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
      if (ec != std::errc()) throw ValidationError("bad index on partition line " + std::to_string(line_no));
      shard.push_back(v);
      rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
    }
    p.shards.push_back(std::move(shard));
    ++line_no;
  }
  return p;
}

std::string partition_sidecar_json(const Partition& p, const PartitionSpec& spec) {
  nlohmann::ordered_json j;
  j["scheme"] = std::string(scheme_tag(spec.scheme));
  j["num_clients"] = spec.num_clients;
  j["dirichlet_alpha"] = spec.dirichlet_alpha;
  j["seed"] = spec.seed;
  j["n_k"] = p.sizes();
  j["n"] = p.total();
  return j.dump(2) + "\n";
}

}  // namespace cachefed
