// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cachefed/cache_model.hpp"
#include "cachefed/feature_space.hpp"
#include "cachefed/partitioner.hpp"

namespace cachefed {

enum class LrSchedule { kConstant, kInverseT };

struct FederationConfig {
  std::uint32_t num_clients = 10;
  // K; 0 = every client holding at least one sample, each round.
  std::uint32_t clients_per_round = 0;
  std::uint32_t rounds = 20;
  std::uint32_t local_epochs = 1;
  double lr = 0.001;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  // 0 = plain FedAvg; > 0 adds the FedProx proximal term on the keys.
  double prox_mu = 0.0;
  // Mini-batch size for local SGD; 0 = the whole shard as one batch.
  std::uint32_t batch_size = 1;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  // inverse_t: lr_t = lr * gamma / (gamma + t - 1), t = 1, 2, ...
  double lr_gamma = 10.0;
  std::uint64_t seed = 1;

  void validate() const;
  double lr_at(std::uint32_t round) const;

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

// Server -> client message. Only the trainable keys travel.
struct Broadcast {
  std::uint32_t round = 0;
  Matrix global_keys;
};

// Client -> server message: updated keys plus scalar training losses. Raw
// features and labels never appear here.
struct ClientReport {
  std::uint32_t client_id = 0;
  Matrix keys;
  std::vector<double> epoch_losses;
};

// What the server can see of a client: its id, its sample count n_k, and a
// train call that maps a Broadcast to a ClientReport.
class ClientEndpoint {
 public:
  virtual ~ClientEndpoint() = default;
  virtual std::uint32_t id() const = 0;
  virtual std::size_t sample_count() const = 0;
  virtual ClientReport train(const Broadcast& msg) = 0;
};

struct LocalUpdate {
  Matrix keys;
  // Mean training loss of each local epoch.
  std::vector<double> epoch_losses;
};

// E local epochs of SGD on the keys, starting from `global_keys`. Sample order
// within an epoch is shuffled from (seed, round, client_id, epoch) when
// mini-batching; a full-shard batch keeps dataset order.
LocalUpdate client_update(const CacheModel& frozen, const Matrix& global_keys,
                          const TextHead& head, const FeatureDataset& shard,
                          const FederationConfig& cfg, std::uint32_t round,
                          std::uint32_t client_id);

// In-process client holding a private shard.
class SimulatedClient final : public ClientEndpoint {
 public:
  SimulatedClient(std::uint32_t id, FeatureDataset shard, CacheModel frozen, TextHead head,
                  FederationConfig cfg);

  std::uint32_t id() const override { return id_; }
  std::size_t sample_count() const override { return shard_.size(); }
  ClientReport train(const Broadcast& msg) override;

 private:
  std::uint32_t id_;
  FeatureDataset shard_;
  CacheModel frozen_;
  TextHead head_;
  FederationConfig cfg_;
};

// K distinct ids drawn uniformly without replacement from the clients with
// n_k > 0, returned in ascending order. Stream derived from (seed, round).
// K = 0 selects every non-empty client.
std::vector<std::uint32_t> sample_clients(std::uint32_t round, const FederationConfig& cfg,
                                          std::span<const std::size_t> client_sizes);

// sum_k (n_k / n_S) W1_k over the reports, n_S the selected sample mass;
// accumulated in ascending client-id order.
Matrix aggregate(std::span<const ClientReport> updates,
                 std::span<const std::size_t> client_sizes);

struct RoundLog {
  std::uint32_t round = 0;
  std::vector<std::uint32_t> selected;
  std::vector<double> local_losses;  // last-epoch loss per selected client
  double accuracy = 0.0;
  std::optional<double> mean_loss;   // empty for the round-0 evaluation
  std::uint64_t params_uploaded = 0;
  std::uint64_t flops_estimate = 0;

  friend bool operator==(const RoundLog&, const RoundLog&) = default;
};

struct ServerState {
  CacheModel global_model;
  std::uint32_t round = 0;
  std::vector<RoundLog> history;  // rounds 1..T
};

struct TrainingResult {
  ServerState state;
  double initial_accuracy = 0.0;
  // Round-0 evaluation followed by the T round logs.
  std::vector<RoundLog> full_history() const;
};

struct TrainingSetup {
  CacheModel initial;
  TextHead head;
  FeatureDataset train;
  FeatureDataset test;
};

// Algorithm loop over arbitrary endpoints: sample, broadcast, local updates
// (concurrently), aggregate, evaluate. `clients[k]->id()` must equal k.
TrainingResult run_federation(const CacheModel& initial, const TextHead& head,
                              const FeatureDataset& test,
                              std::span<ClientEndpoint* const> clients,
                              const FederationConfig& cfg);

// Builds one SimulatedClient per shard and runs the federation.
TrainingResult run_training(const TrainingSetup& setup, const Partition& partition,
                            const FederationConfig& cfg);

struct ModelDims {
  std::uint64_t feature_dim = 0;  // C
  std::uint64_t cache_size = 0;   // M
  std::uint64_t num_classes = 0;
};

struct RoundCost {
  std::uint64_t params_per_round = 0;
  std::uint64_t flops_per_round = 0;
};

// Floating-point operations for one sample's forward and backward pass:
//   zero-shot logits     2 C N
//   affinity f W1        2 C M, plus 3 M for exp(-beta (1 - s))
//   adapter A W2^T       2 N M
//   fusion               2 N
//   softmax + CE grad    5 N
//   dA = alpha dF W2     2 N M
//   A .* dA              M
//   dW1 = beta X^T (.)   2 C M
std::uint64_t flops_per_sample(const ModelDims& d);
// Parameter update of one SGD step (scale and subtract): 2 C M.
std::uint64_t flops_per_step(const ModelDims& d);
// FLOPs of E local epochs over n samples with the configured batch size.
std::uint64_t client_flops(const ModelDims& d, std::uint64_t n, const FederationConfig& cfg);

// Per round: params = K C M (only the keys are uploaded; K = 0 counts as N);
// flops = K * client_flops(n = samples_per_client).
RoundCost cost_accounting(const FederationConfig& cfg, const ModelDims& dims,
                          std::uint64_t samples_per_client);

// rounds.csv: "# ..." comment line, header round,accuracy,mean_loss,
// params_uploaded,flops, then one row per log. mean_loss "nan" when absent.
std::string history_to_csv(std::span<const RoundLog> history);
// One JSON object per line with every RoundLog field.
std::string history_to_jsonl(std::span<const RoundLog> history);
std::vector<RoundLog> history_from_jsonl(std::string_view text);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace cachefed
