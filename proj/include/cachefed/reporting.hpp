// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cachefed/feature_space.hpp"
#include "cachefed/fed_runtime.hpp"
#include "cachefed/partitioner.hpp"

namespace cachefed {

enum class CacheInit { kSynthetic, kRandom };

// Everything needed to rerun an experiment from scratch.
struct ExperimentSpec {
  SynthSpec world;
  PartitionSpec partition;
  FederationConfig federation;
  CacheInit init = CacheInit::kSynthetic;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

struct ExperimentRecord {
  ExperimentSpec spec;
  std::string scheme;  // iid | dir | pat
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::vector<RoundLog> history;  // round 0 first
  std::uint64_t seed = 0;         // federation seed

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

// Generates the world and partition described by `spec`, then trains.
ExperimentRecord run_experiment(const ExperimentSpec& spec);

// Seed for CacheInit::kRandom keys, derived from the federation seed.
std::uint64_t random_init_seed(std::uint64_t federation_seed);
// Same, reusing an already generated world and partition.
ExperimentRecord run_experiment(const ExperimentSpec& spec, const World& world,
                                const Partition& partition);

struct SweepGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  ExperimentSpec base;

  void validate() const;
};

// alpha and beta each over {0, 0.5, 1, 1.5, 2}.
SweepGrid default_sweep_grid();

// Seed of cell `index` (alpha-major) derived from the base federation seed.
std::uint64_t sweep_cell_seed(std::uint64_t base_seed, std::size_t index);

struct SweepResult {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<ExperimentRecord> records;  // alpha-major

  double accuracy(std::size_t alpha_index, std::size_t beta_index) const;
  // Cell with the highest final accuracy; first in alpha-major order on ties.
  std::pair<std::size_t, std::size_t> best_cell() const;
};

// One run per (alpha, beta) cell on a shared world and partition.
SweepResult run_sweep(const SweepGrid& grid, const World& world, const Partition& partition);

struct SweepRow {
  double alpha = 0.0;
  double beta = 0.0;
  double final_accuracy = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

std::vector<SweepRow> sweep_rows(const SweepResult& result);
// sweep.csv: "# ..." comment, header alpha,beta,final_accuracy,seed.
std::string sweep_to_csv(std::span<const SweepRow> rows);
std::vector<SweepRow> sweep_from_csv(std::string_view text);
std::string sweep_to_json(std::span<const SweepRow> rows);
std::vector<SweepRow> sweep_from_json(std::string_view text);

std::string records_to_json(std::span<const ExperimentRecord> records);
std::vector<ExperimentRecord> records_from_json(std::string_view text);
// records.csv: "# ..." comment, header scheme,seed,alpha,beta,lr,rounds,
// local_epochs,num_clients,clients_per_round,initial_accuracy,final_accuracy.
std::string records_to_csv(std::span<const ExperimentRecord> records);

struct SchemeSummary {
  std::string scheme;
  std::size_t runs = 0;
  double mean_initial = 0.0;
  double mean_final = 0.0;
  double min_final = 0.0;
  double max_final = 0.0;
};

// Grouped by scheme tag: iid, dir, pat, then any other tags in sorted order.
std::vector<SchemeSummary> summarize_by_scheme(std::span<const ExperimentRecord> records);
std::string summary_table(std::span<const SchemeSummary> summary);

struct ReportPaths {
  std::filesystem::path json;
  std::filesystem::path csv;
  std::filesystem::path summary;
};

// Writes records.json, records.csv and summary.txt into `dir` atomically.
ReportPaths emit_report(std::span<const ExperimentRecord> records,
                        const std::filesystem::path& dir);

}  // namespace cachefed
