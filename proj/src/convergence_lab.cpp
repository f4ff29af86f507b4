// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#include "cachefed/convergence_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cachefed/error.hpp"
#include "cachefed/rng.hpp"

namespace cachefed {

namespace {

constexpr double kDivergenceLimit = 1e12;
constexpr std::uint64_t kNoiseTag = 0xC1;
constexpr std::uint64_t kSampleTag = 0xC2;
constexpr std::uint64_t kRunTag = 0xC3;
constexpr std::uint64_t kResampleTag = 0xC4;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

// Uniform K-subset of [0, N) in ascending order (partial Fisher-Yates).
std::vector<std::size_t> draw_subset(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// sum_{k in S} p_k (N / K) v^k, accumulated in ascending k.
void scaled_aggregate(const ConvexProblem& p, const std::vector<std::vector<double>>& v,
                      std::span<const std::size_t> subset, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const double scale = static_cast<double>(p.num_clients()) / static_cast<double>(subset.size());
  for (std::size_t k : subset) {
    const double w = p.weights[k] * scale;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * v[k][i];
  }
}

}  // namespace

ConvexProblem ConvexProblem::from_clients(std::vector<std::vector<double>> curvature,
                                          std::vector<std::vector<double>> centers,
                                          std::vector<double> offsets,
                                          std::vector<double> weights, std::vector<double> noise,
                                          std::vector<double> start) {
  const std::size_t n = weights.size();
  if (n == 0) throw ValidationError("problem needs at least one client");
  if (curvature.size() != n || centers.size() != n || offsets.size() != n || noise.size() != n) {
    throw ShapeError("per-client arrays must all have " + std::to_string(n) + " entries");
  }
  const std::size_t dim = centers.front().size();
  if (dim == 0) throw ValidationError("dim must be >= 1");
  double wsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (curvature[k].size() != dim || centers[k].size() != dim) {
      throw ShapeError("client " + std::to_string(k) + " has the wrong dimension");
    }
    if (!(weights[k] > 0.0)) throw ValidationError("weights must be positive");
    if (!(noise[k] >= 0.0)) throw ValidationError("noise must be non-negative");
    for (double h : curvature[k]) {
      if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("curvatures must be positive");
    }
    wsum += weights[k];
  }
  if (std::abs(wsum - 1.0) > 1e-12) throw ValidationError("weights must sum to 1");
  if (start.empty()) start.assign(dim, 0.0);
  if (start.size() != dim) throw ShapeError("start point has the wrong dimension");

  ConvexProblem p;
  p.curvature = std::move(curvature);
  p.centers = std::move(centers);
  p.offsets = std::move(offsets);
  p.weights = std::move(weights);
  p.noise = std::move(noise);
  p.start = std::move(start);

  p.L = 0.0;
  p.mu = INFINITY;
  for (const auto& h : p.curvature) {
    for (double v : h) {
      p.L = std::max(p.L, v);
      p.mu = std::min(p.mu, v);
    }
  }
  // c* = (sum p_k H_k)^-1 sum p_k H_k a_k, coordinate-wise for diagonal H_k.
  p.c_star.assign(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    double hsum = 0.0, hasum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      hsum += p.weights[k] * p.curvature[k][i];
      hasum += p.weights[k] * p.curvature[k][i] * p.centers[k][i];
    }
    p.c_star[i] = hasum / hsum;
  }
  p.f_star = p.objective(p.c_star);
  double local_min = 0.0;
  for (std::size_t k = 0; k < n; ++k) local_min += p.weights[k] * p.offsets[k];
  p.heterogeneity_gap = p.f_star - local_min;
  if (p.heterogeneity_gap < -1e-12) {
    throw ValidationError("heterogeneity gap is negative: " + std::to_string(p.heterogeneity_gap));
  }
  return p;
}

bool ConvexProblem::uniform_weights() const {
  const double u = 1.0 / static_cast<double>(num_clients());
  return std::all_of(weights.begin(), weights.end(),
                     [u](double w) { return std::abs(w - u) <= 1e-15; });
}

double ConvexProblem::local_objective(std::size_t k, std::span<const double> c) const {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = c[i] - centers[k][i];
    s += curvature[k][i] * d * d;
  }
  return 0.5 * s + offsets[k];
}

double ConvexProblem::objective(std::span<const double> c) const {
  double s = 0.0;
  for (std::size_t k = 0; k < num_clients(); ++k) s += weights[k] * local_objective(k, c);
  return s;
}

void ConvexProblem::local_gradient(std::size_t k, std::span<const double> c,
                                   std::span<double> out) const {
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = curvature[k][i] * (c[i] - centers[k][i]);
}

ConvexProblem make_problem(std::uint32_t num_clients, std::uint32_t dim, double heterogeneity,
                           double sigma, std::uint64_t seed, double mu, double L) {
  if (num_clients < 1 || dim < 1) throw ValidationError("num_clients and dim must be >= 1");
  if (!(mu > 0.0) || !(L >= mu)) throw ValidationError("need 0 < mu <= L");
  if (!(heterogeneity >= 0.0) || !(sigma >= 0.0)) {
    throw ValidationError("heterogeneity and sigma must be >= 0");
  }
  Rng rng(derive_seed(seed, 0xC0));
  std::vector<std::vector<double>> h(num_clients, std::vector<double>(dim));
  std::vector<std::vector<double>> a(num_clients, std::vector<double>(dim));
  for (std::uint32_t k = 0; k < num_clients; ++k) {
    for (std::uint32_t i = 0; i < dim; ++i) h[k][i] = mu + (L - mu) * rng.uniform();
    for (std::uint32_t i = 0; i < dim; ++i) a[k][i] = heterogeneity * rng.normal();
  }
  h.front().front() = mu;
  if (num_clients * dim > 1) h.back().back() = L;
  std::vector<double> w(num_clients, 1.0 / num_clients);
  return ConvexProblem::from_clients(std::move(h), std::move(a),
                                     std::vector<double>(num_clients, 0.0), std::move(w),
                                     std::vector<double>(num_clients, sigma));
}

RateConfig RateConfig::theorem_default(const ConvexProblem& problem, std::uint32_t local_steps,
                                       std::uint32_t sampled, std::uint64_t horizon) {
  RateConfig cfg;
  cfg.local_steps = local_steps;
  cfg.sampled = sampled;
  cfg.clients = static_cast<std::uint32_t>(problem.num_clients());
  cfg.horizon = horizon;
  cfg.gamma = std::max(8.0 * problem.L / problem.mu - 1.0, static_cast<double>(local_steps));
  cfg.beta_lr = 2.0 / problem.mu;
  return cfg;
}

std::vector<std::string> rate_precondition_violations(const ConvexProblem& problem,
                                                      const RateConfig& cfg) {
  std::vector<std::string> out;
  const double eta1 = cfg.eta(1);
  if (eta1 > 1.0 / problem.mu) out.push_back("eta_1 <= 1/mu");
  if (eta1 > 1.0 / (4.0 * problem.L)) out.push_back("eta_1 <= 1/(4L)");
  // beta / (t + gamma) <= 2 beta / (t + E + gamma) for all t >= 0 iff E <= gamma.
  if (cfg.beta_lr > 0.0 && static_cast<double>(cfg.local_steps) > cfg.gamma) {
    out.push_back("eta_t <= 2 eta_{t+E}");
  }
  return out;
}

Trajectory run_local_sgd_avg(const ConvexProblem& problem, const RateConfig& cfg,
                             std::uint64_t seed, const SyncObserver& observer) {
  const std::size_t n = problem.num_clients();
  const std::size_t dim = problem.dim();
  if (cfg.clients != n) {
    throw ValidationError("rate config has N = " + std::to_string(cfg.clients) +
                          " but the problem has " + std::to_string(n) + " clients");
  }
  if (cfg.local_steps < 1) throw ValidationError("E must be >= 1");
  if (cfg.sampled < 1 || cfg.sampled > n) throw ValidationError("K must be in [1, N]");
  if (cfg.horizon < 1) throw ValidationError("T must be >= 1");
  if (!(cfg.gamma > -1.0) || !(cfg.beta_lr >= 0.0)) {
    throw ValidationError("need gamma > -1 and beta_lr >= 0");
  }
  if (cfg.sampled < n && !problem.uniform_weights()) {
    throw ValidationError("partial participation requires uniform client weights");
  }

  // sum_k p_k H_k, for the exact gap (c - c*)^T Hbar (c - c*) / 2.
  std::vector<double> hbar(dim, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < dim; ++i) hbar[i] += problem.weights[k] * problem.curvature[k][i];
  }
  const auto gap_of = [&](std::span<const double> c) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = c[i] - problem.c_star[i];
      s += hbar[i] * d * d;
    }
    return 0.5 * s;
  };

  Rng noise_rng(derive_seed(seed, kNoiseTag));
  Rng sample_rng(derive_seed(seed, kSampleTag));
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(dim));

  std::vector<std::vector<double>> c(n, problem.start);
  std::vector<double> mean = problem.start;
  std::vector<double> grad(dim);
  std::vector<std::size_t> everyone(n);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});

  Trajectory tr;
  tr.gap.reserve(cfg.horizon);
  tr.divergence.reserve(cfg.horizon);
  tr.gap.push_back(gap_of(mean));
  tr.divergence.push_back(0.0);

  for (std::uint64_t t = 1; t < cfg.horizon; ++t) {
    const double eta = cfg.eta(t);
    for (std::size_t k = 0; k < n; ++k) {
      problem.local_gradient(k, c[k], grad);
      if (problem.noise[k] > 0.0) {
        const double s = problem.noise[k] * inv_sqrt_dim;
        for (std::size_t i = 0; i < dim; ++i) grad[i] += s * noise_rng.normal();
      }
      tr.max_grad_norm = std::max(tr.max_grad_norm, std::sqrt(squared_norm(grad)));
      for (std::size_t i = 0; i < dim; ++i) c[k][i] -= eta * grad[i];
    }

    const std::uint64_t next = t + 1;
    double divergence = 0.0;
    if (next % cfg.local_steps == 0) {
      if (observer) observer(next, c);
      if (cfg.sampled == n) {
        scaled_aggregate(problem, c, everyone, mean);
      } else {
        const auto subset = draw_subset(sample_rng, n, cfg.sampled);
        scaled_aggregate(problem, c, subset, mean);
      }
      for (auto& ck : c) ck = mean;
    } else {
      std::fill(mean.begin(), mean.end(), 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < dim; ++i) mean[i] += problem.weights[k] * c[k][i];
      }
      for (std::size_t k = 0; k < n; ++k) {
        divergence += problem.weights[k] * squared_distance(mean, c[k]);
      }
    }

    const double gap = gap_of(mean);
    if (!(gap <= kDivergenceLimit)) {
      const auto violated = rate_precondition_violations(problem, cfg);
      std::string why = violated.empty() ? std::string("no step-size precondition is violated")
                                         : "violated precondition: " + violated.front();
      for (std::size_t i = 1; i < violated.size(); ++i) why += ", " + violated[i];
      throw DivergenceError("optimality gap exceeded 1e12 at t = " + std::to_string(next) +
                            " (" + why + ")");
    }
    tr.gap.push_back(gap);
    tr.divergence.push_back(divergence);
  }
  tr.mean = std::move(mean);
  return tr;
}

BoundConstants bound_constants(const ConvexProblem& problem, const RateConfig& cfg, double G) {
  BoundConstants bc;
  bc.G = G;
  for (std::size_t k = 0; k < problem.num_clients(); ++k) {
    bc.sigma_term += problem.weights[k] * problem.weights[k] * problem.noise[k] * problem.noise[k];
  }
  const double e = static_cast<double>(cfg.local_steps);
  const double g2 = G * G;
  bc.B = bc.sigma_term + 6.0 * problem.L * problem.heterogeneity_gap +
         8.0 * (e - 1.0) * (e - 1.0) * g2;
  const double n = static_cast<double>(cfg.clients);
  const double k = static_cast<double>(cfg.sampled);
  bc.C = cfg.sampled == cfg.clients ? 0.0 : ((n - k) / (n - 1.0)) * (4.0 / k) * e * e * g2;
  return bc;
}

double TheoremBound::operator()(double t) const {
  return (2.0 * L / ((t + gamma) * mu)) * ((B + C) / mu + 2.0 * L * initial_distance_sq);
}

TheoremBound theorem_bound(const ConvexProblem& problem, const RateConfig& cfg,
                           const BoundConstants& constants, double initial_distance_sq) {
  return TheoremBound{problem.L, problem.mu, cfg.gamma, constants.B, constants.C,
                      initial_distance_sq};
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

CertificationReport certify_rate(const ConvexProblem& problem, const RateConfig& cfg,
                                 std::uint32_t runs, std::uint64_t seed) {
  if (runs < 1) throw ValidationError("certification needs at least one run");
  const std::size_t horizon = cfg.horizon;
  std::vector<Trajectory> trajs(runs);
  std::vector<std::exception_ptr> errors(runs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::uint32_t r = 0; r < runs; ++r) {
    try {
      trajs[r] = run_local_sgd_avg(problem, cfg, derive_seed(seed, kRunTag, r));
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CertificationReport rep;
  rep.gamma = cfg.gamma;
  rep.mean_gap.assign(horizon, 0.0);
  rep.std_error.assign(horizon, 0.0);
  double max_norm = 0.0;
  for (const auto& tr : trajs) {
    max_norm = std::max(max_norm, tr.max_grad_norm);
    for (std::size_t i = 0; i < horizon; ++i) rep.mean_gap[i] += tr.gap[i];
  }
  const double r = static_cast<double>(runs);
  for (auto& g : rep.mean_gap) g /= r;
  if (runs > 1) {
    for (std::size_t i = 0; i < horizon; ++i) {
      double ss = 0.0;
      for (const auto& tr : trajs) {
        const double d = tr.gap[i] - rep.mean_gap[i];
        ss += d * d;
      }
      rep.std_error[i] = std::sqrt(ss / (r - 1.0) / r);
    }
  }

  rep.constants = bound_constants(problem, cfg, 1.1 * max_norm);
  rep.initial_distance_sq = squared_distance(problem.start, problem.c_star);
  const auto bound = theorem_bound(problem, cfg, rep.constants, rep.initial_distance_sq);
  rep.bound.resize(horizon);
  for (std::size_t i = 0; i < horizon; ++i) {
    rep.bound[i] = bound(static_cast<double>(i + 1));
    if (rep.mean_gap[i] > rep.bound[i]) {
      ++rep.exceedances;
      if (runs > 1 && rep.mean_gap[i] - rep.bound[i] > 3.0 * rep.std_error[i]) {
        ++rep.violations;
      } else {
        rep.high_variance = true;
      }
    }
  }

  const std::size_t first = std::max<std::size_t>(1, horizon / 10);
  std::vector<double> lx, ly;
  for (std::size_t t = first; t <= horizon; ++t) {
    const double g = rep.mean_gap[t - 1];
    if (!(g > 0.0)) continue;
    lx.push_back(std::log(static_cast<double>(t) + cfg.gamma));
    ly.push_back(std::log(g));
  }
  rep.slope = lx.size() >= 2 ? fit_slope(lx, ly) : 0.0;
  return rep;
}

LemmaReport check_lemmas(const ConvexProblem& problem, const RateConfig& cfg, std::uint64_t seed,
                         std::uint32_t resamplings, std::uint32_t sync_points) {
  if (resamplings < 2) throw ValidationError("need at least two resamplings");
  const std::size_t n = problem.num_clients();
  const std::size_t dim = problem.dim();
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(cfg.sampled);

  // Snapshots of the one-step iterates at the first `sync_points` syncs.
  std::vector<std::pair<std::uint64_t, std::vector<std::vector<double>>>> snaps;
  const auto tr = run_local_sgd_avg(
      problem, cfg, seed, [&](std::uint64_t t, const std::vector<std::vector<double>>& v) {
        if (snaps.size() < sync_points) snaps.emplace_back(t, v);
      });

  LemmaReport rep;
  rep.G = 1.1 * tr.max_grad_norm;
  const double g2 = rep.G * rep.G;
  const double e = static_cast<double>(cfg.local_steps);
  for (std::size_t i = 0; i < tr.divergence.size(); ++i) {
    const double eta = cfg.eta(i + 1);
    const double bound = 4.0 * eta * eta * (e - 1.0) * (e - 1.0) * g2;
    ++rep.divergence_checks;
    if (tr.divergence[i] > bound) ++rep.divergence_violations;
    if (bound > 0.0) rep.divergence_max_ratio = std::max(rep.divergence_max_ratio,
                                                         tr.divergence[i] / bound);
  }

  Rng rng(derive_seed(seed, kResampleTag));
  std::vector<double> full(dim), agg(dim), sum(dim), sum_sq(dim);
  std::vector<std::size_t> everyone(n);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  for (const auto& [t, v] : snaps) {
    scaled_aggregate(problem, v, everyone, full);
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
    std::vector<double> dev(resamplings);
    for (std::uint32_t r = 0; r < resamplings; ++r) {
      const auto subset = draw_subset(rng, n, cfg.sampled);
      scaled_aggregate(problem, v, subset, agg);
      for (std::size_t i = 0; i < dim; ++i) {
        sum[i] += agg[i];
        sum_sq[i] += agg[i] * agg[i];
      }
      dev[r] = squared_distance(agg, full);
    }
    const double rr = static_cast<double>(resamplings);
    // Unbiasedness: distance of the sample mean from the full average relative
    // to the standard error of that mean.
    double offset = 0.0, trace_var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double m = sum[i] / rr;
      offset += (m - full[i]) * (m - full[i]);
      trace_var += (sum_sq[i] - rr * m * m) / (rr - 1.0);
    }
    if (trace_var > 0.0) {
      rep.unbiased_z = std::max(rep.unbiased_z, std::sqrt(offset / (trace_var / rr)));
    }

    LemmaSample s;
    s.t = t;
    const double mean_dev = std::accumulate(dev.begin(), dev.end(), 0.0) / rr;
    double ss = 0.0;
    for (double d : dev) ss += (d - mean_dev) * (d - mean_dev);
    s.empirical = mean_dev;
    s.std_error = std::sqrt(ss / (rr - 1.0) / rr);
    double spread = 0.0;
    for (std::size_t k = 0; k < n; ++k) spread += squared_distance(v[k], full);
    s.exact = n > 1 ? spread * (1.0 - kk / nn) / (kk * (nn - 1.0)) : 0.0;
    const double eta = cfg.eta(t - 1);
    s.bound = n > 1 ? ((nn - kk) / (nn - 1.0)) * (4.0 / kk) * eta * eta * e * e * g2 : 0.0;
    rep.variance.push_back(s);
  }
  return rep;
}

}  // namespace cachefed
