// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/fed_runtime.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <numeric>

#include "cachefed/error.hpp"
#include "cachefed/json_codec.hpp"
#include "cachefed/rng.hpp"

namespace cachefed {

namespace {

constexpr std::uint64_t kSamplingTag = 0x5A;
constexpr std::uint64_t kShuffleTag = 0x5B;

std::uint64_t steps_per_epoch(std::uint64_t n, std::uint32_t batch_size) {
  if (n == 0) return 0;
  if (batch_size == 0 || batch_size >= n) return 1;
  return (n + batch_size - 1) / batch_size;
}

}  // namespace

void FederationConfig::validate() const {
  if (num_clients < 1) throw ValidationError("num_clients must be >= 1");
  if (clients_per_round > num_clients) {
    throw ValidationError("clients_per_round must be in [0, num_clients], got " +
                          std::to_string(clients_per_round));
  }
  if (local_epochs < 1) throw ValidationError("local_epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be finite and >= 0");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ValidationError("alpha, beta must be >= 0");
  if (!(prox_mu >= 0.0)) throw ValidationError("prox_mu must be >= 0");
  if (lr_schedule == LrSchedule::kInverseT && !(lr_gamma > 0.0)) {
    throw ValidationError("inverse_t schedule needs gamma > 0");
  }
}

double FederationConfig::lr_at(std::uint32_t round) const {
  if (lr_schedule == LrSchedule::kConstant) return lr;
  const double t = static_cast<double>(std::max<std::uint32_t>(round, 1));
  return lr * lr_gamma / (lr_gamma + t - 1.0);
}

LocalUpdate client_update(const CacheModel& frozen, const Matrix& global_keys,
                          const TextHead& head, const FeatureDataset& shard,
                          const FederationConfig& cfg, std::uint32_t round,
                          std::uint32_t client_id) {
  if (shard.size() == 0) {
    throw EmptyShardError("client " + std::to_string(client_id) +
                          " has no samples and must not be selected");
  }
  LocalUpdate out;
  CacheModel local = frozen.with_keys(global_keys);
  const double lr = cfg.lr_at(round);
  const std::size_t n = shard.size();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = full_batch ? n : cfg.batch_size;
  GradWorkspace ws;
  for (std::uint32_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    if (!full_batch) {
      Rng rng(derive_seed(cfg.seed, kShuffleTag, round, client_id, epoch));
      rng.shuffle(order);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const double loss = cache_backward(local, head, shard.features, shard.labels, rows, ws);
      apply_key_update(local.mutable_keys(), shard.features, rows, ws, local.beta(), lr,
                       cfg.prox_mu, global_keys);
      loss_sum += loss * static_cast<double>(stop - start);
    }
    require_finite(local.keys(), "client_update");
    out.epoch_losses.push_back(loss_sum / static_cast<double>(n));
  }
  out.keys = local.keys();
  return out;
}

SimulatedClient::SimulatedClient(std::uint32_t id, FeatureDataset shard, CacheModel frozen,
                                 TextHead head, FederationConfig cfg)
    : id_(id),
      shard_(std::move(shard)),
      frozen_(std::move(frozen)),
      head_(std::move(head)),
      cfg_(cfg) {}

ClientReport SimulatedClient::train(const Broadcast& msg) {
  auto upd = client_update(frozen_, msg.global_keys, head_, shard_, cfg_, msg.round, id_);
  return ClientReport{id_, std::move(upd.keys), std::move(upd.epoch_losses)};
}

std::vector<std::uint32_t> sample_clients(std::uint32_t round, const FederationConfig& cfg,
                                          std::span<const std::size_t> client_sizes) {
  if (cfg.clients_per_round > cfg.num_clients) {
    throw SamplingError("K = " + std::to_string(cfg.clients_per_round) + " exceeds N = " +
                        std::to_string(cfg.num_clients));
  }
  std::vector<std::uint32_t> pool;
  for (std::size_t k = 0; k < client_sizes.size(); ++k) {
    if (client_sizes[k] > 0) pool.push_back(static_cast<std::uint32_t>(k));
  }
  if (cfg.clients_per_round == 0) {
    if (pool.empty()) throw SamplingError("every client shard is empty");
    return pool;
  }
  if (pool.size() < cfg.clients_per_round) {
    throw SamplingError("only " + std::to_string(pool.size()) +
                        " non-empty clients, need " + std::to_string(cfg.clients_per_round));
  }
  // Partial Fisher-Yates: the first K slots end up a uniform K-subset.
  Rng rng(derive_seed(cfg.seed, kSamplingTag, round));
  for (std::size_t i = 0; i < cfg.clients_per_round; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(cfg.clients_per_round);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Matrix aggregate(std::span<const ClientReport> updates,
                 std::span<const std::size_t> client_sizes) {
  if (updates.empty()) throw AggregationError("no client updates to aggregate");
  std::vector<const ClientReport*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientReport* a, const ClientReport* b) { return a->client_id < b->client_id; });

  double mass = 0.0;
  for (const auto* u : sorted) {
    if (u->client_id >= client_sizes.size()) {
      throw AggregationError("unknown client id " + std::to_string(u->client_id));
    }
    if (u->keys.rows() != sorted.front()->keys.rows() ||
        u->keys.cols() != sorted.front()->keys.cols()) {
      throw ShapeError("client " + std::to_string(u->client_id) + " sent mismatched keys");
    }
    mass += static_cast<double>(client_sizes[u->client_id]);
  }
  if (!(mass > 0.0)) throw AggregationError("selected clients hold zero samples");

  Matrix out(sorted.front()->keys.rows(), sorted.front()->keys.cols());
  auto acc = out.data();
  for (const auto* u : sorted) {
    const double w = static_cast<double>(client_sizes[u->client_id]) / mass;
    const auto k = u->keys.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * k[i];
  }
  return out;
}

std::vector<RoundLog> TrainingResult::full_history() const {
  std::vector<RoundLog> out;
  out.reserve(state.history.size() + 1);
  RoundLog zero;
  zero.accuracy = initial_accuracy;
  out.push_back(zero);
  out.insert(out.end(), state.history.begin(), state.history.end());
  return out;
}

TrainingResult run_federation(const CacheModel& initial, const TextHead& head,
                              const FeatureDataset& test,
                              std::span<ClientEndpoint* const> clients,
                              const FederationConfig& cfg) {
  cfg.validate();
  if (clients.size() != cfg.num_clients) {
    throw ValidationError(std::to_string(clients.size()) + " endpoints for " +
                          std::to_string(cfg.num_clients) + " configured clients");
  }
  std::vector<std::size_t> sizes(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k]->id() != k) throw ValidationError("endpoint ids must match their slot");
    sizes[k] = clients[k]->sample_count();
  }
  const ModelDims dims{initial.feature_dim(), initial.cache_size(), initial.num_classes()};

  TrainingResult result;
  result.state.global_model = initial;
  result.initial_accuracy = evaluate(initial, head, test);

  for (std::uint32_t t = 1; t <= cfg.rounds; ++t) {
    const auto selected = sample_clients(t, cfg, sizes);
    const Broadcast msg{t, result.state.global_model.keys()};

    std::vector<ClientReport> reports(selected.size());
    std::vector<std::exception_ptr> errors(selected.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < selected.size(); ++i) {
      try {
        reports[i] = clients[selected[i]]->train(msg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    Matrix keys = aggregate(reports, sizes);
    require_finite(keys, "aggregate");
    result.state.global_model = result.state.global_model.with_keys(std::move(keys));
    result.state.round = t;

    RoundLog log;
    log.round = t;
    log.selected = selected;
    double loss_sum = 0.0;
    for (const auto& r : reports) {
      const double last = r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back();
      log.local_losses.push_back(last);
      loss_sum += last;
    }
    log.mean_loss = loss_sum / static_cast<double>(reports.size());
    log.accuracy = evaluate(result.state.global_model, head, test);
    log.params_uploaded = selected.size() * dims.feature_dim * dims.cache_size;
    for (auto k : selected) log.flops_estimate += client_flops(dims, sizes[k], cfg);
    result.state.history.push_back(std::move(log));
  }
  return result;
}

TrainingResult run_training(const TrainingSetup& setup, const Partition& partition,
                            const FederationConfig& cfg) {
  cfg.validate();
  if (partition.num_clients() != cfg.num_clients) {
    throw ValidationError("partition has " + std::to_string(partition.num_clients()) +
                          " clients, config says " + std::to_string(cfg.num_clients));
  }
  FederationConfig local_cfg = cfg;
  local_cfg.alpha = setup.initial.alpha();
  local_cfg.beta = setup.initial.beta();
  std::vector<std::unique_ptr<SimulatedClient>> owned;
  std::vector<ClientEndpoint*> endpoints;
  for (std::uint32_t k = 0; k < partition.num_clients(); ++k) {
    owned.push_back(std::make_unique<SimulatedClient>(
        k, setup.train.subset(partition.shards[k]), setup.initial, setup.head, local_cfg));
    endpoints.push_back(owned.back().get());
  }
  return run_federation(setup.initial, setup.head, setup.test, endpoints, cfg);
}

std::uint64_t flops_per_sample(const ModelDims& d) {
  const std::uint64_t c = d.feature_dim, m = d.cache_size, n = d.num_classes;
  return 2 * c * n + 2 * c * m + 3 * m + 2 * n * m + 2 * n + 5 * n + 2 * n * m + m +
         2 * c * m;
}

std::uint64_t flops_per_step(const ModelDims& d) { return 2 * d.feature_dim * d.cache_size; }

std::uint64_t client_flops(const ModelDims& d, std::uint64_t n, const FederationConfig& cfg) {
  const std::uint64_t per_epoch =
      n * flops_per_sample(d) + steps_per_epoch(n, cfg.batch_size) * flops_per_step(d);
  return cfg.local_epochs * per_epoch;
}

RoundCost cost_accounting(const FederationConfig& cfg, const ModelDims& dims,
                          std::uint64_t samples_per_client) {
  const std::uint64_t k = cfg.clients_per_round == 0 ? cfg.num_clients : cfg.clients_per_round;
  RoundCost c;
  c.params_per_round = k * dims.feature_dim * dims.cache_size;
  c.flops_per_round = k * client_flops(dims, samples_per_client, cfg);
  return c;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string history_to_csv(std::span<const RoundLog> history) {
  std::string out =
      "# round: index (0 = initial evaluation); accuracy: test accuracy of the global model; "
      "mean_loss: mean of selected clients' last-epoch losses; params_uploaded: key entries "
      "sent to the server; flops: estimated local training FLOPs\n";
  out += "round,accuracy,mean_loss,params_uploaded,flops\n";
  for (const auto& r : history) {
    out += std::to_string(r.round) + "," + format_double(r.accuracy) + "," +
           (r.mean_loss ? format_double(*r.mean_loss) : std::string("nan")) + "," +
           std::to_string(r.params_uploaded) + "," + std::to_string(r.flops_estimate) + "\n";
  }
  return out;
}

std::string history_to_jsonl(std::span<const RoundLog> history) {
  std::string out;
  for (const auto& r : history) out += Json(r).dump() + "\n";
  return out;
}

std::vector<RoundLog> history_from_jsonl(std::string_view text) {
  std::vector<RoundLog> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    out.push_back(Json::parse(line).get<RoundLog>());
  }
  return out;
}

}  // namespace cachefed
