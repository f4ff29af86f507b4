// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/reporting.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <map>

#include "cachefed/error.hpp"
#include "cachefed/io.hpp"
#include "cachefed/json_codec.hpp"
#include "cachefed/rng.hpp"

namespace cachefed {

namespace {

constexpr std::uint64_t kSweepTag = 0x5E;
constexpr std::uint64_t kRandomInitTag = 0xA7;

std::string_view init_tag(CacheInit init) {
  return init == CacheInit::kSynthetic ? "synthetic" : "random";
}

CacheInit parse_init(std::string_view s) {
  if (s == "synthetic") return CacheInit::kSynthetic;
  if (s == "random") return CacheInit::kRandom;
  throw ValidationError("unknown cache init '" + std::string(s) + "'");
}

Json spec_json(const ExperimentSpec& s) {
  Json j = Json::object();
  j["world"] = s.world;
  j["partition"] = s.partition;
  j["federation"] = s.federation;
  j["init"] = std::string(init_tag(s.init));
  return j;
}

ExperimentSpec spec_from_json(const Json& j) {
  ExperimentSpec s;
  s.world = j.at("world").get<SynthSpec>();
  s.partition = j.at("partition").get<PartitionSpec>();
  s.federation = j.at("federation").get<FederationConfig>();
  s.init = parse_init(j.at("init").get<std::string>());
  return s;
}

// Splits CSV text into data lines, skipping '#' comments and the header.
std::vector<std::vector<std::string_view>> csv_rows(std::string_view text,
                                                    std::string_view header) {
  std::vector<std::vector<std::string_view>> rows;
  bool seen_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty() || line.front() == '#') continue;
    if (!seen_header) {
      if (line != header) throw ValidationError("unexpected CSV header '" + std::string(line) + "'");
      seen_header = true;
      continue;
    }
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos
                                                                          : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  if (!seen_header) throw ValidationError("CSV header missing");
  return rows;
}

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("malformed number '" + std::string(s) + "'");
  }
  return v;
}

int scheme_rank(std::string_view tag) {
  if (tag == "iid") return 0;
  if (tag == "dir") return 1;
  if (tag == "pat") return 2;
  return 3;
}

}  // namespace

ExperimentRecord run_experiment(const ExperimentSpec& spec) {
  const World world = generate_world(spec.world);
  const Partition part = partition(world.real_train, spec.world.num_classes, spec.partition);
  return run_experiment(spec, world, part);
}

ExperimentRecord run_experiment(const ExperimentSpec& spec, const World& world,
                                const Partition& part) {
  const auto& fed = spec.federation;
  const std::size_t classes = world.catalog.size();
  TrainingSetup setup{
      spec.init == CacheInit::kSynthetic
          ? init_cache(world.synthetic_balanced, classes, fed.alpha, fed.beta)
          : init_random_cache(world.synthetic_balanced, classes,
                              random_init_seed(fed.seed), fed.alpha, fed.beta),
      world.text_head, world.real_train, world.real_test};
  const auto result = run_training(setup, part, fed);

  ExperimentRecord rec;
  rec.spec = spec;
  rec.scheme = std::string(scheme_tag(spec.partition.scheme));
  rec.history = result.full_history();
  rec.initial_accuracy = result.initial_accuracy;
  rec.final_accuracy = rec.history.back().accuracy;
  rec.seed = fed.seed;
  return rec;
}

void SweepGrid::validate() const {
  if (alphas.empty() || betas.empty()) throw ValidationError("sweep axes must be non-empty");
}

SweepGrid default_sweep_grid() {
  SweepGrid g;
  g.alphas = {0.0, 0.5, 1.0, 1.5, 2.0};
  g.betas = {0.0, 0.5, 1.0, 1.5, 2.0};
  return g;
}

std::uint64_t random_init_seed(std::uint64_t federation_seed) {
  return derive_seed(federation_seed, kRandomInitTag);
}

std::uint64_t sweep_cell_seed(std::uint64_t base_seed, std::size_t index) {
  return derive_seed(base_seed, kSweepTag, index);
}

double SweepResult::accuracy(std::size_t alpha_index, std::size_t beta_index) const {
  return records.at(alpha_index * betas.size() + beta_index).final_accuracy;
}

std::pair<std::size_t, std::size_t> SweepResult::best_cell() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].final_accuracy > records[best].final_accuracy) best = i;
  }
  return {best / betas.size(), best % betas.size()};
}

SweepResult run_sweep(const SweepGrid& grid, const World& world, const Partition& part) {
  grid.validate();
  SweepResult out;
  out.alphas = grid.alphas;
  out.betas = grid.betas;
  const std::size_t cells = grid.alphas.size() * grid.betas.size();
  out.records.resize(cells);
  std::vector<std::exception_ptr> errors(cells);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < cells; ++i) {
    try {
      ExperimentSpec spec = grid.base;
      spec.federation.alpha = grid.alphas[i / grid.betas.size()];
      spec.federation.beta = grid.betas[i % grid.betas.size()];
      spec.federation.seed = sweep_cell_seed(grid.base.federation.seed, i);
      out.records[i] = run_experiment(spec, world, part);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<SweepRow> sweep_rows(const SweepResult& result) {
  std::vector<SweepRow> rows;
  for (const auto& r : result.records) {
    rows.push_back({r.spec.federation.alpha, r.spec.federation.beta, r.final_accuracy, r.seed});
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out =
      "# alpha: fusion weight; beta: affinity sharpness; final_accuracy: test accuracy after "
      "the last round; seed: federation seed of the cell\n"
      "alpha,beta,final_accuracy,seed\n";
  for (const auto& r : rows) {
    out += format_double(r.alpha) + "," + format_double(r.beta) + "," +
           format_double(r.final_accuracy) + "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

std::vector<SweepRow> sweep_from_csv(std::string_view text) {
  std::vector<SweepRow> out;
  for (const auto& cells : csv_rows(text, "alpha,beta,final_accuracy,seed")) {
    if (cells.size() != 4) throw ValidationError("sweep.csv rows need 4 fields");
    out.push_back({parse_number<double>(cells[0]), parse_number<double>(cells[1]),
                   parse_number<double>(cells[2]), parse_number<std::uint64_t>(cells[3])});
  }
  return out;
}

std::string sweep_to_json(std::span<const SweepRow> rows) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["alpha"] = r.alpha;
    j["beta"] = r.beta;
    j["final_accuracy"] = r.final_accuracy;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<SweepRow> sweep_from_json(std::string_view text) {
  std::vector<SweepRow> out;
  for (const auto& j : Json::parse(text)) {
    out.push_back({j.at("alpha").get<double>(), j.at("beta").get<double>(),
                   j.at("final_accuracy").get<double>(), j.at("seed").get<std::uint64_t>()});
  }
  return out;
}

std::string records_to_json(std::span<const ExperimentRecord> records) {
  Json arr = Json::array();
  for (const auto& r : records) {
    Json j;
    j["config"] = spec_json(r.spec);
    j["scheme"] = r.scheme;
    j["initial_accuracy"] = r.initial_accuracy;
    j["final_accuracy"] = r.final_accuracy;
    j["history"] = r.history;
    j["seed"] = r.seed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<ExperimentRecord> records_from_json(std::string_view text) {
  std::vector<ExperimentRecord> out;
  for (const auto& j : Json::parse(text)) {
    ExperimentRecord r;
    r.spec = spec_from_json(j.at("config"));
    r.scheme = j.at("scheme").get<std::string>();
    r.initial_accuracy = j.at("initial_accuracy").get<double>();
    r.final_accuracy = j.at("final_accuracy").get<double>();
    r.history = j.at("history").get<std::vector<RoundLog>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    out.push_back(std::move(r));
  }
  return out;
}

std::string records_to_csv(std::span<const ExperimentRecord> records) {
  std::string out =
      "# one row per experiment; accuracies are test accuracy at round 0 and after the last "
      "round; remaining columns echo the federation config\n"
      "scheme,seed,alpha,beta,lr,rounds,local_epochs,num_clients,clients_per_round,"
      "initial_accuracy,final_accuracy\n";
  for (const auto& r : records) {
    const auto& f = r.spec.federation;
    out += r.scheme + "," + std::to_string(r.seed) + "," + format_double(f.alpha) + "," +
           format_double(f.beta) + "," + format_double(f.lr) + "," + std::to_string(f.rounds) +
           "," + std::to_string(f.local_epochs) + "," + std::to_string(f.num_clients) + "," +
           std::to_string(f.clients_per_round) + "," + format_double(r.initial_accuracy) + "," +
           format_double(r.final_accuracy) + "\n";
  }
  return out;
}

std::vector<SchemeSummary> summarize_by_scheme(std::span<const ExperimentRecord> records) {
  std::map<std::pair<int, std::string>, std::vector<const ExperimentRecord*>> groups;
  for (const auto& r : records) groups[{scheme_rank(r.scheme), r.scheme}].push_back(&r);
  std::vector<SchemeSummary> out;
  for (const auto& [key, recs] : groups) {
    SchemeSummary s;
    s.scheme = key.second;
    s.runs = recs.size();
    s.min_final = recs.front()->final_accuracy;
    s.max_final = recs.front()->final_accuracy;
    for (const auto* r : recs) {
      s.mean_initial += r->initial_accuracy;
      s.mean_final += r->final_accuracy;
      s.min_final = std::min(s.min_final, r->final_accuracy);
      s.max_final = std::max(s.max_final, r->final_accuracy);
    }
    s.mean_initial /= static_cast<double>(s.runs);
    s.mean_final /= static_cast<double>(s.runs);
    out.push_back(std::move(s));
  }
  return out;
}

std::string summary_table(std::span<const SchemeSummary> summary) {
  std::string out = "scheme  runs  round0   final    min      max\n";
  char buf[128];
  for (const auto& s : summary) {
    std::snprintf(buf, sizeof(buf), "%-6s  %4zu  %.4f  %.4f  %.4f  %.4f\n", s.scheme.c_str(),
                  s.runs, s.mean_initial, s.mean_final, s.min_final, s.max_final);
    out += buf;
  }
  return out;
}

ReportPaths emit_report(std::span<const ExperimentRecord> records,
                        const std::filesystem::path& dir) {
  if (records.empty()) throw ValidationError("no records to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  ReportPaths paths{dir / "records.json", dir / "records.csv", dir / "summary.txt"};
  io::write_file_atomic(paths.json, records_to_json(records));
  io::write_file_atomic(paths.csv, records_to_csv(records));
  const auto summary = summarize_by_scheme(records);
  io::write_file_atomic(paths.summary, summary_table(summary));
  return paths;
}

}  // namespace cachefed
