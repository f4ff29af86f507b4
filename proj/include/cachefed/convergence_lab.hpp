// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cachefed {

// Federated objective F(c) = sum_k p_k F_k(c) with diagonal quadratic clients
//   F_k(c) = 1/2 (c - a_k)^T H_k (c - a_k) + b_k.
// Stochastic gradients add sigma_k * g / sqrt(dim), g standard normal, so the
// gradient noise has E||xi||^2 = sigma_k^2.
struct ConvexProblem {
  std::vector<std::vector<double>> curvature;  // diag(H_k), one row per client
  std::vector<std::vector<double>> centers;    // a_k
  std::vector<double> offsets;                 // b_k = F_k*
  std::vector<double> weights;                 // p_k
  std::vector<double> noise;                   // sigma_k
  std::vector<double> start;                   // c_1, shared by every client

  // Derived in closed form by from_clients.
  double L = 0.0;
  double mu = 0.0;
  std::vector<double> c_star;
  double f_star = 0.0;
  double heterogeneity_gap = 0.0;  // Gamma = F* - sum_k p_k F_k*

  // Validates the inputs and fills the derived fields. `start` defaults to 0.
  static ConvexProblem from_clients(std::vector<std::vector<double>> curvature,
                                    std::vector<std::vector<double>> centers,
                                    std::vector<double> offsets, std::vector<double> weights,
                                    std::vector<double> noise, std::vector<double> start = {});

  std::size_t num_clients() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return c_star.size(); }
  bool uniform_weights() const;

  double objective(std::span<const double> c) const;
  double local_objective(std::size_t k, std::span<const double> c) const;
  void local_gradient(std::size_t k, std::span<const double> c, std::span<double> out) const;
};

// Uniform weights, equal noise sigma, centers a_k = heterogeneity * g_k, start
// at the origin. Curvatures are uniform in [mu, L] with one entry pinned to
// each end so the derived L and mu equal the targets.
ConvexProblem make_problem(std::uint32_t num_clients, std::uint32_t dim, double heterogeneity,
                           double sigma, std::uint64_t seed, double mu = 1.0, double L = 4.0);

// eta_t = beta_lr / (t + gamma), t = 1, 2, ...; clients synchronize at
// t in {E, 2E, ...}; K of N clients are aggregated per synchronization.
struct RateConfig {
  std::uint32_t local_steps = 1;  // E
  std::uint32_t sampled = 1;      // K
  std::uint32_t clients = 1;      // N
  std::uint64_t horizon = 1;      // T, gaps are reported for t = 1..T
  double gamma = 1.0;
  double beta_lr = 1.0;

  double eta(std::uint64_t t) const { return beta_lr / (static_cast<double>(t) + gamma); }

  // gamma = max(8 L / mu - 1, E), beta_lr = 2 / mu.
  static RateConfig theorem_default(const ConvexProblem& problem, std::uint32_t local_steps,
                                    std::uint32_t sampled, std::uint64_t horizon);
};

// Human-readable list of violated step-size conditions: eta_1 <= 1/mu,
// eta_1 <= 1/(4L), eta_t <= 2 eta_{t+E}. Empty when all hold.
std::vector<std::string> rate_precondition_violations(const ConvexProblem& problem,
                                                      const RateConfig& cfg);

struct Trajectory {
  std::vector<double> gap;         // F(cbar_t) - F*, index t - 1
  std::vector<double> divergence;  // sum_k p_k ||cbar_t - c_t^k||^2, index t - 1
  std::vector<double> mean;        // cbar_T
  double max_grad_norm = 0.0;      // over every stochastic gradient drawn
};

// Called at each synchronization time t with the one-step iterates v_t^k of
// all N clients, before the sampled aggregate replaces them.
using SyncObserver =
    std::function<void(std::uint64_t t, const std::vector<std::vector<double>>& v)>;

// Local SGD with periodic averaging. All N clients step every t; at sync
// times the server draws K clients uniformly without replacement and sets
// every client to sum_{k in S} p_k (N / K) v^k. Throws DivergenceError when
// the gap exceeds 1e12.
Trajectory run_local_sgd_avg(const ConvexProblem& problem, const RateConfig& cfg,
                             std::uint64_t seed, const SyncObserver& observer = {});

struct BoundConstants {
  double sigma_term = 0.0;  // sum_k p_k^2 sigma_k^2
  double B = 0.0;           // sigma_term + 6 L Gamma + 8 (E-1)^2 G^2
  double C = 0.0;           // (N-K)/(N-1) * 4/K * E^2 G^2
  double G = 0.0;
};

BoundConstants bound_constants(const ConvexProblem& problem, const RateConfig& cfg, double G);

struct TheoremBound {
  double L = 0.0;
  double mu = 0.0;
  double gamma = 0.0;
  double B = 0.0;
  double C = 0.0;
  double initial_distance_sq = 0.0;  // ||cbar_1 - c*||^2

  // 2L / ((t + gamma) mu) * ((B + C) / mu + 2 L ||cbar_1 - c*||^2)
  double operator()(double t) const;
};

TheoremBound theorem_bound(const ConvexProblem& problem, const RateConfig& cfg,
                           const BoundConstants& constants, double initial_distance_sq);

struct CertificationReport {
  std::vector<double> mean_gap;  // index t - 1
  std::vector<double> std_error;
  std::vector<double> bound;
  std::uint64_t exceedances = 0;  // t with mean_gap > bound
  std::uint64_t violations = 0;   // exceedances beyond 3 standard errors
  // Some exceedance is within sampling noise, or R is too small to tell.
  bool high_variance = false;
  double slope = 0.0;  // log mean_gap vs log(t + gamma) over t in [T/10, T]
  BoundConstants constants;
  double gamma = 0.0;
  double initial_distance_sq = 0.0;
};

// R seeded runs (seed streams derived from `seed` and the run index) averaged
// and checked against the bound with G = 1.1 * the largest observed
// stochastic-gradient norm.
CertificationReport certify_rate(const ConvexProblem& problem, const RateConfig& cfg,
                                 std::uint32_t runs, std::uint64_t seed);

// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

struct LemmaSample {
  std::uint64_t t = 0;
  double empirical = 0.0;  // mean over resamplings
  double std_error = 0.0;
  double exact = 0.0;      // closed form for uniform sampling without replacement
  double bound = 0.0;
};

struct LemmaReport {
  double G = 0.0;
  // Divergence sum_k p_k ||cbar_t - c_t^k||^2 against 4 eta_t^2 (E-1)^2 G^2,
  // checked at every t of one run.
  std::uint64_t divergence_checks = 0;
  std::uint64_t divergence_violations = 0;
  double divergence_max_ratio = 0.0;
  // ||mean of the resampled scaled aggregate - full average|| in units of its
  // standard error, largest over the inspected sync points (unbiasedness).
  double unbiased_z = 0.0;
  // Sampling variance E_S ||vbar - cbar||^2 at the inspected sync points.
  std::vector<LemmaSample> variance;
};

// Runs one trajectory and, at up to `sync_points` synchronizations, resamples
// the client subset `resamplings` times.
LemmaReport check_lemmas(const ConvexProblem& problem, const RateConfig& cfg, std::uint64_t seed,
                         std::uint32_t resamplings, std::uint32_t sync_points);

}  // namespace cachefed
