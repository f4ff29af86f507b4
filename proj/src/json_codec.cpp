// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/json_codec.hpp"

#include "cachefed/error.hpp"

namespace cachefed {

void to_json(Json& j, const RoundLog& r) {
  j = Json::object();
  j["round"] = r.round;
  j["accuracy"] = r.accuracy;
  j["mean_loss"] = r.mean_loss ? Json(*r.mean_loss) : Json();
  j["params_uploaded"] = r.params_uploaded;
  j["flops"] = r.flops_estimate;
  j["selected"] = r.selected;
  j["local_losses"] = r.local_losses;
}

void from_json(const Json& j, RoundLog& r) {
  r.round = j.at("round").get<std::uint32_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_loss.reset();
  if (!j.at("mean_loss").is_null()) r.mean_loss = j.at("mean_loss").get<double>();
  r.params_uploaded = j.at("params_uploaded").get<std::uint64_t>();
  r.flops_estimate = j.at("flops").get<std::uint64_t>();
  r.selected = j.at("selected").get<std::vector<std::uint32_t>>();
  r.local_losses = j.at("local_losses").get<std::vector<double>>();
}

void to_json(Json& j, const FederationConfig& c) {
  j = Json::object();
  j["num_clients"] = c.num_clients;
  j["clients_per_round"] = c.clients_per_round;
  j["rounds"] = c.rounds;
  j["local_epochs"] = c.local_epochs;
  j["lr"] = c.lr;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["prox_mu"] = c.prox_mu;
  j["batch_size"] = c.batch_size;
  j["lr_schedule"] = c.lr_schedule == LrSchedule::kConstant ? "constant" : "inverse_t";
  j["lr_gamma"] = c.lr_gamma;
  j["seed"] = c.seed;
}

void from_json(const Json& j, FederationConfig& c) {
  c.num_clients = j.at("num_clients").get<std::uint32_t>();
  c.clients_per_round = j.at("clients_per_round").get<std::uint32_t>();
  c.rounds = j.at("rounds").get<std::uint32_t>();
  c.local_epochs = j.at("local_epochs").get<std::uint32_t>();
  c.lr = j.at("lr").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.prox_mu = j.at("prox_mu").get<double>();
  c.batch_size = j.at("batch_size").get<std::uint32_t>();
  const auto sched = j.at("lr_schedule").get<std::string>();
  if (sched == "constant") {
    c.lr_schedule = LrSchedule::kConstant;
  } else if (sched == "inverse_t") {
    c.lr_schedule = LrSchedule::kInverseT;
  } else {
    throw ValidationError("unknown lr_schedule '" + sched + "'");
  }
  c.lr_gamma = j.at("lr_gamma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(Json& j, const SynthSpec& s) {
  j = Json::object();
  j["num_classes"] = s.num_classes;
  j["shots_per_class"] = s.shots_per_class;
  j["feature_dim"] = s.feature_dim;
  j["class_separation"] = s.class_separation;
  j["noise_scale"] = s.noise_scale;
  j["domain_gap"] = s.domain_gap;
  j["text_noise"] = s.text_noise;
  j["train_per_class"] = s.train_per_class;
  j["test_per_class"] = s.test_per_class;
  j["seed"] = s.seed;
}

void from_json(const Json& j, SynthSpec& s) {
  s.num_classes = j.at("num_classes").get<std::uint32_t>();
  s.shots_per_class = j.at("shots_per_class").get<std::uint32_t>();
  s.feature_dim = j.at("feature_dim").get<std::uint32_t>();
  s.class_separation = j.at("class_separation").get<double>();
  s.noise_scale = j.at("noise_scale").get<double>();
  s.domain_gap = j.at("domain_gap").get<double>();
  s.text_noise = j.at("text_noise").get<double>();
  s.train_per_class = j.at("train_per_class").get<std::uint32_t>();
  s.test_per_class = j.at("test_per_class").get<std::uint32_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(Json& j, const PartitionSpec& s) {
  j = Json::object();
  j["scheme"] = std::string(scheme_tag(s.scheme));
  j["num_clients"] = s.num_clients;
  j["dirichlet_alpha"] = s.dirichlet_alpha;
  j["seed"] = s.seed;
}

void from_json(const Json& j, PartitionSpec& s) {
  s.scheme = parse_scheme(j.at("scheme").get<std::string>());
  s.num_clients = j.at("num_clients").get<std::uint32_t>();
  s.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace cachefed
