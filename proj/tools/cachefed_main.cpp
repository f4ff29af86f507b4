// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

// cachefed command-line front end.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cachefed/cache_model.hpp"
#include "cachefed/convergence_lab.hpp"
#include "cachefed/error.hpp"
#include "cachefed/feature_space.hpp"
#include "cachefed/fed_runtime.hpp"
#include "cachefed/io.hpp"
#include "cachefed/json_codec.hpp"
#include "cachefed/kernels.hpp"
#include "cachefed/partitioner.hpp"
#include "cachefed/reporting.hpp"

namespace fs = std::filesystem;
using namespace cachefed;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

constexpr const char* kFeatureFormatHelp =
    "Feature files (CFF1, little-endian): \"CFF1\" | u32 version=1 | u32 num_classes |\n"
    "u32 feature_dim | u64 num_samples | per class: u32 name_len, UTF-8 name |\n"
    "per sample: u32 label, feature_dim x f32. The text head uses the same layout\n"
    "with one sample per class carrying label i.";

constexpr const char* kCheckpointHelp =
    "Checkpoint (CFM1): \"CFM1\" | u32 version | u32 C | u32 M | u32 num_classes |\n"
    "f64 alpha | f64 beta | W1 as C x M f64 row-major | M x u32 value labels.";

struct PartitionFlags {
  std::string scheme = "iid";
  PartitionSpec spec;
};

void add_synth_flags(CLI::App* sub, SynthSpec& s, const std::string& seed_flag) {
  sub->add_option("--classes", s.num_classes, "Number of classes N");
  sub->add_option("--shots", s.shots_per_class, "Synthetic samples per class (cache size M = N x shots)");
  sub->add_option("--dim", s.feature_dim, "Feature dimension C");
  sub->add_option("--separation", s.class_separation, "Class-specific weight of each center");
  sub->add_option("--noise", s.noise_scale, "Sample noise scale");
  sub->add_option("--domain-gap", s.domain_gap, "Rotation of synthetic centers, radians");
  sub->add_option("--text-noise", s.text_noise, "Text-head perturbation, relative to --noise");
  sub->add_option("--train-per-class", s.train_per_class, "Mean real training samples per class");
  sub->add_option("--test-per-class", s.test_per_class, "Real test samples per class");
  sub->add_option(seed_flag, s.seed, "Seed of the synthetic world");
}

void add_partition_flags(CLI::App* sub, PartitionFlags& p) {
  sub->add_option("--partition", p.scheme, "Partition scheme")
      ->check(CLI::IsMember({"iid", "dir", "dirichlet", "pat", "pathological"}));
  sub->add_option("--dir-alpha", p.spec.dirichlet_alpha, "Dirichlet concentration");
  sub->add_option("--partition-seed", p.spec.seed, "Seed of the partition");
}

void add_federation_flags(CLI::App* sub, FederationConfig& c, std::string& schedule,
                          bool with_fusion) {
  sub->add_option("--clients", c.num_clients, "Number of clients N");
  sub->add_option("--clients-per-round", c.clients_per_round,
                  "Clients sampled per round K; 0 = every non-empty client");
  sub->add_option("--rounds", c.rounds, "Communication rounds T");
  sub->add_option("--local-epochs", c.local_epochs, "Local epochs E");
  sub->add_option("--lr", c.lr, "Learning rate");
  if (with_fusion) {
    sub->add_option("--alpha", c.alpha, "Adapter fusion weight");
    sub->add_option("--beta", c.beta, "Affinity sharpness");
  }
  sub->add_option("--prox-mu", c.prox_mu, "FedProx proximal weight; 0 disables");
  sub->add_option("--batch-size", c.batch_size, "Local mini-batch size; 0 = whole shard");
  sub->add_option("--lr-schedule", schedule, "Learning-rate schedule")
      ->check(CLI::IsMember({"constant", "inverse_t"}));
  sub->add_option("--lr-gamma", c.lr_gamma, "inverse_t: lr_t = lr * gamma / (gamma + t - 1)");
  sub->add_option("--seed", c.seed, "Federation seed (sampling and shuffling)");
}

void apply_schedule(FederationConfig& c, const std::string& schedule) {
  c.lr_schedule = schedule == "inverse_t" ? LrSchedule::kInverseT : LrSchedule::kConstant;
}

void print_resolved(const CLI::App* sub) {
  std::cout << "# resolved config\n[" << sub->get_name() << "]\n"
            << sub->config_to_str(true, false) << std::flush;
}

std::vector<double> parse_axis(const std::string& text, const char* name) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string cell = text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError(std::string("bad value '") + cell + "' in " + name);
    }
    pos = comma + 1;
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_and_report(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  io::write_file_atomic(path, bytes);
  std::cout << path.string() << "  " << io::checksum_hex(bytes) << "\n";
}

void apply_thread_cap() {
  const char* env = std::getenv("CACHEFED_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0) {
    throw ValidationError(std::string("CACHEFED_THREADS must be a non-negative integer, got '") +
                          env + "'");
  }
  kernels::set_max_threads(static_cast<int>(n));
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::kValidation: return kExitValidation;
    case Error::Category::kIo: return kExitIo;
    case Error::Category::kDivergence: return kExitDivergence;
  }
  return 1;
}

// gen-synth ---------------------------------------------------------------

void cmd_gen_synth(const SynthSpec& spec, const fs::path& out) {
  spec.validate();
  ensure_dir(out);
  const World w = generate_world(spec);
  write_and_report(out / "train.cff", encode_features(w.real_train, w.catalog));
  write_and_report(out / "test.cff", encode_features(w.real_test, w.catalog));
  write_and_report(out / "synthetic.cff", encode_features(w.synthetic_balanced, w.catalog));
  FeatureDataset head;
  head.features = w.text_head.weights;
  for (std::size_t c = 0; c < w.catalog.size(); ++c) head.labels.push_back(static_cast<Label>(c));
  write_and_report(out / "text.cff", encode_features(head, w.catalog));
}

// train -------------------------------------------------------------------

struct LoadedData {
  ClassCatalog catalog;
  FeatureDataset train;
  FeatureDataset test;
  FeatureDataset synthetic;
  TextHead head;
};

LoadedData load_data(const fs::path& dir) {
  LoadedData d;
  auto train = read_features(dir / "train.cff");
  auto test = read_features(dir / "test.cff");
  auto synth = read_features(dir / "synthetic.cff");
  ClassCatalog head_catalog;
  d.head = read_text_head(dir / "text.cff", &head_catalog);
  if (!(test.catalog == train.catalog) || !(synth.catalog == train.catalog) ||
      !(head_catalog == train.catalog)) {
    throw ShapeError("class catalogs differ between the files in " + dir.string());
  }
  const std::size_t dim = d.head.feature_dim();
  for (const auto* f : {&train, &test, &synth}) {
    if (f->dataset.feature_dim() != dim) {
      throw ShapeError("feature dimension mismatch: text head has " + std::to_string(dim) +
                       ", a dataset has " + std::to_string(f->dataset.feature_dim()));
    }
  }
  d.catalog = std::move(train.catalog);
  d.train = std::move(train.dataset);
  d.test = std::move(test.dataset);
  d.synthetic = std::move(synth.dataset);
  return d;
}

void cmd_train(const fs::path& data, FederationConfig cfg, PartitionFlags pf,
               const std::string& init, const fs::path& out) {
  cfg.validate();
  const LoadedData d = load_data(data);
  const std::size_t classes = d.catalog.size();
  pf.spec.scheme = parse_scheme(pf.scheme);
  pf.spec.num_clients = cfg.num_clients;
  const Partition part = partition(d.train, classes, pf.spec);

  const CacheModel initial =
      init == "random"
          ? init_random_cache(d.synthetic, classes, random_init_seed(cfg.seed), cfg.alpha, cfg.beta)
          : init_cache(d.synthetic, classes, cfg.alpha, cfg.beta);
  const TrainingSetup setup{initial, d.head, d.train, d.test};
  const auto result = run_training(setup, part, cfg);
  const auto history = result.full_history();

  ensure_dir(out);
  io::write_file_atomic(out / "rounds.csv", history_to_csv(history));
  io::write_file_atomic(out / "rounds.jsonl", history_to_jsonl(history));
  save_checkpoint(out / "model.cfm", result.state.global_model);
  std::printf("round 0 accuracy %.4f, final accuracy %.4f after %u rounds\n",
              result.initial_accuracy, history.back().accuracy, cfg.rounds);
  std::cout << (out / "rounds.csv").string() << "\n"
            << (out / "rounds.jsonl").string() << "\n"
            << (out / "model.cfm").string() << "\n";
}

// convergence ---------------------------------------------------------------

struct ConvergenceFlags {
  std::string participation = "5/10";
  std::uint32_t dim = 20;
  double mu = 1.0;
  double L = 4.0;
  double sigma = 0.1;
  double heterogeneity = 1.0;
  std::uint32_t local_steps = 5;
  std::uint64_t horizon = 10000;
  std::uint32_t runs = 50;
  std::uint64_t seed = 1;
  double gamma = -1.0;
  double lr_scale = -1.0;
};

void cmd_convergence(const ConvergenceFlags& f, const fs::path& out) {
  const auto slash = f.participation.find('/');
  if (slash == std::string::npos) throw ValidationError("--participation must look like K/N");
  std::uint32_t k = 0, n = 0;
  try {
    k = static_cast<std::uint32_t>(std::stoul(f.participation.substr(0, slash)));
    n = static_cast<std::uint32_t>(std::stoul(f.participation.substr(slash + 1)));
  } catch (const std::exception&) {
    throw ValidationError("--participation must look like K/N, got " + f.participation);
  }
  if (k < 1 || k > n) throw ValidationError("--participation needs 1 <= K <= N");

  const auto problem = make_problem(n, f.dim, f.heterogeneity, f.sigma, f.seed, f.mu, f.L);
  auto cfg = RateConfig::theorem_default(problem, f.local_steps, k, f.horizon);
  if (f.gamma >= 0.0) cfg.gamma = f.gamma;
  if (f.lr_scale >= 0.0) cfg.beta_lr = f.lr_scale;
  for (const auto& v : rate_precondition_violations(problem, cfg)) {
    std::cerr << "warning: step-size precondition fails: " << v << "\n";
  }
  const auto rep = certify_rate(problem, cfg, f.runs, f.seed);

  std::printf("L = %s  mu = %s  Gamma = %s  gamma = %s\n", format_double(problem.L).c_str(),
              format_double(problem.mu).c_str(), format_double(problem.heterogeneity_gap).c_str(),
              format_double(cfg.gamma).c_str());
  std::printf("G = %s  B = %s  C = %s\n", format_double(rep.constants.G).c_str(),
              format_double(rep.constants.B).c_str(), format_double(rep.constants.C).c_str());
  std::printf("slope = %.4f  exceedances = %llu  violations = %llu  high_variance = %s\n",
              rep.slope, static_cast<unsigned long long>(rep.exceedances),
              static_cast<unsigned long long>(rep.violations),
              rep.high_variance ? "true" : "false");

  std::string csv =
      "# t: iteration; mean_gap: F(cbar_t) - F* averaged over runs; bound: theorem "
      "right-hand side; violation_flag: 1 when mean_gap > bound\n"
      "t,mean_gap,bound,violation_flag\n";
  for (std::size_t i = 0; i < rep.mean_gap.size(); ++i) {
    csv += std::to_string(i + 1) + "," + format_double(rep.mean_gap[i]) + "," +
           format_double(rep.bound[i]) + "," + (rep.mean_gap[i] > rep.bound[i] ? "1" : "0") +
           "\n";
  }
  Json j;
  j["slope"] = rep.slope;
  j["exceedances"] = rep.exceedances;
  j["violations"] = rep.violations;
  j["high_variance"] = rep.high_variance;
  j["runs"] = f.runs;
  j["horizon"] = f.horizon;
  j["constants"] = {{"L", problem.L},
                    {"mu", problem.mu},
                    {"Gamma", problem.heterogeneity_gap},
                    {"gamma", cfg.gamma},
                    {"beta_lr", cfg.beta_lr},
                    {"E", cfg.local_steps},
                    {"K", cfg.sampled},
                    {"N", cfg.clients},
                    {"G", rep.constants.G},
                    {"sigma_term", rep.constants.sigma_term},
                    {"B", rep.constants.B},
                    {"C", rep.constants.C},
                    {"initial_distance_sq", rep.initial_distance_sq}};
  ensure_dir(out);
  io::write_file_atomic(out / "convergence.csv", csv);
  io::write_file_atomic(out / "convergence.json", j.dump(2) + "\n");
  std::cout << (out / "convergence.csv").string() << "\n"
            << (out / "convergence.json").string() << "\n";
}

// partition -----------------------------------------------------------------

void cmd_partition(const fs::path& input, std::uint32_t clients, PartitionFlags pf,
                   const fs::path& out) {
  const auto file = read_features(input);
  pf.spec.scheme = parse_scheme(pf.scheme);
  pf.spec.num_clients = clients;
  const std::size_t classes = file.catalog.size();
  const Partition part = partition(file.dataset, classes, pf.spec);
  const auto rep = heterogeneity_report(part, file.dataset, classes);

  std::string table = "# client: id; n_k: shard size; emd: distance of the client's class "
                      "distribution to the global one; classes: per-class counts\n"
                      "client,n_k,emd,classes\n";
  for (std::size_t k = 0; k < part.num_clients(); ++k) {
    table += std::to_string(k) + "," + std::to_string(part.client_size(k)) + "," +
             format_double(rep.emd[k]) + ",";
    for (std::size_t c = 0; c < classes; ++c) {
      table += (c ? " " : "") + std::to_string(rep.histograms[k][c]);
    }
    table += "\n";
  }
  ensure_dir(out);
  io::write_file_atomic(out / "partition.txt", format_partition(part));
  io::write_file_atomic(out / "partition.json", partition_sidecar_json(part, pf.spec));
  io::write_file_atomic(out / "heterogeneity.csv", table);
  std::cout << table;
  std::printf("max emd %.6f\n", rep.max_emd);
  std::cout << (out / "partition.txt").string() << "\n"
            << (out / "partition.json").string() << "\n"
            << (out / "heterogeneity.csv").string() << "\n";
}

// sweep ---------------------------------------------------------------------

void cmd_sweep(ExperimentSpec base, PartitionFlags pf, const std::string& alphas,
               const std::string& betas, const fs::path& out) {
  base.world.validate();
  base.federation.validate();
  pf.spec.scheme = parse_scheme(pf.scheme);
  pf.spec.num_clients = base.federation.num_clients;
  base.partition = pf.spec;
  SweepGrid grid{parse_axis(alphas, "--alphas"), parse_axis(betas, "--betas"), base};
  grid.validate();

  const World world = generate_world(base.world);
  const Partition part = partition(world.real_train, base.world.num_classes, base.partition);
  const auto result = run_sweep(grid, world, part);
  const auto rows = sweep_rows(result);

  ensure_dir(out);
  io::write_file_atomic(out / "sweep.csv", sweep_to_csv(rows));
  io::write_file_atomic(out / "sweep.json", sweep_to_json(rows));
  const auto paths = emit_report(result.records, out);
  for (const auto& r : rows) {
    std::printf("alpha %-4s beta %-4s accuracy %.4f\n", format_double(r.alpha).c_str(),
                format_double(r.beta).c_str(), r.final_accuracy);
  }
  const auto [ai, bi] = result.best_cell();
  std::printf("best: alpha %s beta %s accuracy %.4f\n", format_double(result.alphas[ai]).c_str(),
              format_double(result.betas[bi]).c_str(), result.accuracy(ai, bi));
  std::cout << (out / "sweep.csv").string() << "\n"
            << (out / "sweep.json").string() << "\n"
            << paths.json.string() << "\n"
            << paths.csv.string() << "\n"
            << paths.summary.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cachefed: federated fine-tuning of a key-value cache adapter over a frozen "
               "zero-shot head, with a convergence-rate laboratory"};
  app.set_config("--config", "",
                 "TOML-style file of option values, one [section] per subcommand; command-line "
                 "flags take precedence");
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  app.footer("Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric divergence.\n"
             "CACHEFED_THREADS caps worker threads (0 = all cores).");

  // gen-synth
  SynthSpec synth;
  std::string synth_out = ".";
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic feature-space world");
  add_synth_flags(gen, synth, "--seed");
  gen->add_option("--out", synth_out, "Output directory");
  gen->footer(std::string("Writes train.cff, test.cff, synthetic.cff and text.cff and prints "
                          "each path with its FNV-1a 64-bit checksum.\n") +
              kFeatureFormatHelp);

  // train
  FederationConfig train_cfg;
  std::string train_schedule = "constant";
  PartitionFlags train_pf;
  std::string train_data = ".", train_out = ".", train_init = "synthetic";
  auto* train = app.add_subcommand("train", "Run federated training on feature files");
  train->add_option("--data", train_data, "Directory holding train/test/synthetic/text .cff");
  add_federation_flags(train, train_cfg, train_schedule, true);
  add_partition_flags(train, train_pf);
  train->add_option("--init", train_init, "Cache initialization")
      ->check(CLI::IsMember({"synthetic", "random"}));
  train->add_option("--out", train_out, "Output directory");
  train->footer(std::string("Writes rounds.csv (round,accuracy,mean_loss,params_uploaded,flops; "
                            "round 0 is the untrained cache), rounds.jsonl (one round per line, "
                            "same fields plus selected clients and their losses) and model.cfm.\n") +
                kCheckpointHelp + "\n" + kFeatureFormatHelp);

  // convergence
  ConvergenceFlags conv;
  std::string conv_out = ".";
  auto* convergence =
      app.add_subcommand("convergence", "Certify the local-SGD rate bound on a quadratic problem");
  convergence->add_option("--participation", conv.participation, "Sampled/total clients, K/N");
  convergence->add_option("--dim", conv.dim, "Problem dimension");
  convergence->add_option("--mu", conv.mu, "Strong-convexity constant");
  convergence->add_option("--L", conv.L, "Smoothness constant");
  convergence->add_option("--sigma", conv.sigma, "Stochastic-gradient noise (root mean square norm)");
  convergence->add_option("--heterogeneity", conv.heterogeneity, "Spread of client minimizers");
  convergence->add_option("--local-steps", conv.local_steps, "Local steps E between syncs");
  convergence->add_option("--horizon", conv.horizon, "Iterations T");
  convergence->add_option("--runs", conv.runs, "Seeded runs R averaged");
  convergence->add_option("--seed", conv.seed, "Seed of the problem and the runs");
  convergence->add_option("--gamma", conv.gamma,
                          "Override the step-size offset gamma; negative = max(8L/mu - 1, E)");
  convergence->add_option("--lr-scale", conv.lr_scale,
                          "Override beta in eta_t = beta / (t + gamma); negative = 2/mu");
  convergence->add_option("--out", conv_out, "Output directory");
  convergence->footer(
      "Writes convergence.csv (t,mean_gap,bound,violation_flag) and convergence.json "
      "(slope, exceedances, violations and the bound constants).");

  // partition
  PartitionFlags part_pf;
  std::uint32_t part_clients = 10;
  std::string part_input = "train.cff", part_out = ".";
  auto* part = app.add_subcommand("partition", "Partition a feature file across clients");
  part->add_option("--input", part_input, "CFF1 feature file to partition");
  part->add_option("--clients", part_clients, "Number of clients");
  add_partition_flags(part, part_pf);
  part->add_option("--out", part_out, "Output directory");
  part->footer(std::string("Writes partition.txt (\"client_id: idx,idx,...\" per line), "
                           "partition.json (scheme, seed, n_k, n) and heterogeneity.csv.\n") +
               kFeatureFormatHelp);

  // sweep
  ExperimentSpec sweep_base;
  std::string sweep_schedule = "constant";
  PartitionFlags sweep_pf;
  std::string alphas = "0,0.5,1,1.5,2", betas = "0,0.5,1,1.5,2", sweep_out = ".";
  auto* sweep = app.add_subcommand("sweep", "Grid over alpha and beta on a synthetic world");
  add_synth_flags(sweep, sweep_base.world, "--world-seed");
  add_federation_flags(sweep, sweep_base.federation, sweep_schedule, false);
  add_partition_flags(sweep, sweep_pf);
  sweep->add_option("--alphas", alphas, "Comma-separated alpha values");
  sweep->add_option("--betas", betas, "Comma-separated beta values");
  sweep->add_option("--out", sweep_out, "Output directory");
  sweep->footer(
      "Writes sweep.csv (alpha,beta,final_accuracy,seed), sweep.json, records.json, "
      "records.csv and summary.txt. Cell seeds derive from --seed and the cell index.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    apply_thread_cap();
    if (*gen) {
      print_resolved(gen);
      cmd_gen_synth(synth, synth_out);
    } else if (*train) {
      apply_schedule(train_cfg, train_schedule);
      print_resolved(train);
      cmd_train(train_data, train_cfg, train_pf, train_init, train_out);
    } else if (*convergence) {
      print_resolved(convergence);
      cmd_convergence(conv, conv_out);
    } else if (*part) {
      print_resolved(part);
      cmd_partition(part_input, part_clients, part_pf, part_out);
    } else if (*sweep) {
      apply_schedule(sweep_base.federation, sweep_schedule);
      print_resolved(sweep);
      cmd_sweep(sweep_base, sweep_pf, alphas, betas, sweep_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
