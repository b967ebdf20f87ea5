#pragma once

// Scope of external eta-validity: the Delta/Q statistics, the row bootstrap,
// the Bonferroni pre-step and the step-down construction of the
// anti-confidence set.
//
// Hypothesis for each p != p0: p lies outside the scope. Q-hat(p) is large
// when tau(p) is close to tau(p0); rejected points are certified to lie in
// the scope and form the anti-confidence set together with p0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/inference.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/parallel.hpp"
#include "stratfx/rng.hpp"
#include "stratfx/sample.hpp"

namespace stratfx {

enum class BootstrapMode { plain, bonferroni };

struct ScopeConfig {
  ShareVector p0;
  double eta = 0.05;
  double alpha = 0.05;
  double beta = 0.01;
  std::size_t B = 200;
  std::uint64_t seed = 0;
  bool bonferroni = true;
  bool reuse_draws = false;  // share bootstrap draws across step-down steps

  // min_B is relaxed by the low-level bootstrap entry points.
  void validate(std::size_t min_B = 100) const {
    if (!(eta > 0.0))
      fail(ErrorKind::usage, "eta must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
      fail(ErrorKind::usage, "alpha must lie in (0,1)");
    if (bonferroni && !(beta > 0.0 && beta < alpha))
      fail(ErrorKind::usage, "beta must satisfy 0 < beta < alpha");
    if (B < min_B)
      fail(ErrorKind::usage, "B must be at least " + std::to_string(min_B));
  }
};

// Returns the n row indices of bootstrap replication b (attempt counts
// redraws after an empty stratum).
using ResampleHook = std::function<std::vector<std::size_t>(std::size_t n, CounterRng& rng)>;

inline std::vector<std::size_t> iid_resample(std::size_t n, CounterRng& rng) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows)
    r = static_cast<std::size_t>(rng.below(n));
  return rows;
}

inline std::vector<std::size_t> identity_resample(std::size_t n, CounterRng&) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i)
    rows[i] = i;
  return rows;
}

// ceil(q * B)-th order statistic (1-based), clamped to [1, B].
inline double ceiling_quantile(std::vector<double> values, double q) {
  if (values.empty())
    fail(ErrorKind::usage, "quantile of an empty set");
  const double B = static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(q * B - 1e-9));
  k = std::clamp<std::size_t>(k, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

inline double delta_from(double tau, double tau0, double eta) {
  const double diff = tau - tau0;
  return eta * eta * tau0 * tau0 - diff * diff;
}

inline double q_from_delta(double delta, std::size_t n) {
  return 0.5 * std::max(std::sqrt(static_cast<double>(n)) * delta, 0.0);
}

// Grid with p0 added (kept in p1 order) when absent.
inline ShareGrid ensure_benchmark(const ShareGrid& grid, const ShareVector& p0) {
  if (grid.find(p0))
    return grid;
  auto points = grid.points();
  auto p1 = grid.p1_values();
  const double v = p0.p1();
  const auto pos = static_cast<std::size_t>(std::lower_bound(p1.begin(), p1.end(), v) - p1.begin());
  points.insert(points.begin() + static_cast<std::ptrdiff_t>(pos), p0);
  p1.insert(p1.begin() + static_cast<std::ptrdiff_t>(pos), v);
  return ShareGrid(std::move(points), std::move(p1));
}

struct StepRecord {
  std::size_t active = 0;     // |S_k|
  double critical = 0.0;      // c-hat or c-tilde
  double sup_q = 0.0;         // sup over S_k of Q-hat
  double eta_hat = 0.0;       // Bonferroni pre-step (0 in plain mode)
  std::size_t redraws = 0;    // bootstrap draws repeated for empty strata
};

struct AntiConfidenceResult {
  ShareGrid grid;
  std::size_t benchmark = 0;       // index of p0 in grid
  std::vector<int> retained;       // 1: in the anti-confidence set
  std::vector<StepRecord> steps;
  std::vector<std::vector<std::size_t>> active_sets;  // S_1, S_2, ...
  std::vector<int> estimated_scope;
  std::vector<double> tau;
  std::vector<double> q;
  double tau0 = 0.0;

  std::vector<std::size_t> retained_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < retained.size(); ++i)
      if (retained[i])
        out.push_back(i);
    return out;
  }
  // Smallest and largest p1 in the retained set.
  Interval retained_bounds() const {
    const auto idx = retained_indices();
    const auto& p1 = grid.p1_values();
    return {p1[idx.front()], p1[idx.back()]};
  }
};

// Full-sample and bootstrap estimates of tau-hat_ate over one grid. Bootstrap
// estimates for a draw key are computed once and shared by every consumer.
class ScopeEngine {
public:
  ScopeEngine(const KernelCache& cache, ShareGrid grid, ShareVector p0, ResampleHook hook = iid_resample)
      : cache_(&cache), grid_(ensure_benchmark(grid, p0)), hook_(std::move(hook)) {
    benchmark_ = *grid_.find(p0);
    tau_.resize(grid_.size());
    parallel_for(grid_.size(), [&](std::size_t i) { tau_[i] = estimate_ate(cache, grid_[i]).value; });
  }

  const ShareGrid& grid() const noexcept { return grid_; }
  std::size_t benchmark() const noexcept { return benchmark_; }
  const std::vector<double>& tau() const noexcept { return tau_; }
  double tau0() const { return tau_[benchmark_]; }
  std::size_t n() const noexcept { return cache_->n(); }

  double delta(std::size_t i, double eta) const { return delta_from(tau_[i], tau0(), eta); }
  double q(std::size_t i, double eta) const { return q_from_delta(delta(i, eta), n()); }

  struct Draws {
    std::vector<std::vector<double>> tau;  // [b][grid index]
    std::size_t redraws = 0;
  };

  // Bootstrap tau-hat over the whole grid for B replications of stream `step`.
  const Draws& draws(std::uint64_t seed, std::uint64_t step, std::size_t B) {
    const auto key = std::make_tuple(seed, step, B);
    {
      std::lock_guard lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end())
        return *it->second;
    }
    auto out = std::make_unique<Draws>();
    out->tau.assign(B, {});
    std::vector<std::size_t> redraws(B, 0);
    parallel_for(B, [&](std::size_t b) {
      for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt > 100)
          fail(ErrorKind::empty_stratum, "bootstrap replication " + std::to_string(b) +
                                             " kept drawing empty strata after 100 redraws");
        CounterRng rng(derive_key(seed, {step, b, attempt}));
        KernelCache boot(cache_->shared_index(), cache_->options(), remap(hook_(n(), rng)));
        if (boot.has_empty_stratum()) {
          ++redraws[b];
          continue;
        }
        auto& row = out->tau[b];
        row.resize(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i)
          row[i] = estimate_ate(boot, grid_[i]).value;
        break;
      }
    });
    for (auto r : redraws)
      out->redraws += r;
    std::lock_guard lock(mutex_);
    auto [it, inserted] = memo_.emplace(key, std::move(out));
    return *it->second;
  }

private:
  // Hook indices refer to the cache's virtual rows; map back to sample rows.
  std::vector<std::size_t> remap(std::vector<std::size_t> rows) const {
    for (auto& r : rows) {
      if (r >= cache_->n())
        fail(ErrorKind::index, "resample index out of range");
      r = cache_->rows()[r];
    }
    return rows;
  }

  const KernelCache* cache_;
  ShareGrid grid_;
  ResampleHook hook_;
  std::size_t benchmark_ = 0;
  std::vector<double> tau_;
  std::mutex mutex_;
  std::map<std::tuple<std::uint64_t, std::uint64_t, std::size_t>, std::unique_ptr<Draws>> memo_;
};

struct BootstrapStep {
  std::vector<double> plain_sup;       // sup_S Q-hat*_b
  std::vector<double> eta_sup;         // sup_S sqrt(n)(Delta - Delta*_b)
  std::vector<double> bonferroni_sup;  // sup_S Q-tilde*_b
  double eta_hat = 0.0;
  std::size_t redraws = 0;
};

// Bootstrap sup statistics over the active set S (grid indices) for one
// step's draws. eta_hat uses the same replications as the recentred statistic.
inline BootstrapStep bootstrap_step(ScopeEngine& engine, const std::vector<std::size_t>& S, const ScopeConfig& cfg,
                                    std::uint64_t step) {
  if (S.empty())
    fail(ErrorKind::usage, "bootstrap needs a non-empty active set");
  const auto& draws = engine.draws(cfg.seed, cfg.reuse_draws ? 0 : step, cfg.B);
  const double rn = std::sqrt(static_cast<double>(engine.n()));
  const std::size_t b0 = engine.benchmark();
  BootstrapStep out;
  out.redraws = draws.redraws;
  out.plain_sup.assign(cfg.B, 0.0);
  out.eta_sup.assign(cfg.B, -std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> delta_star(cfg.B, std::vector<double>(S.size()));
  for (std::size_t b = 0; b < cfg.B; ++b) {
    const auto& tb = draws.tau[b];
    for (std::size_t m = 0; m < S.size(); ++m) {
      const std::size_t i = S[m];
      const double ds = delta_from(tb[i], tb[b0], cfg.eta);
      delta_star[b][m] = ds;
      const double dh = engine.delta(i, cfg.eta);
      out.plain_sup[b] = std::max(out.plain_sup[b], 0.5 * std::max(rn * (ds - dh), 0.0));
      out.eta_sup[b] = std::max(out.eta_sup[b], rn * (dh - ds));
    }
  }
  out.eta_hat = ceiling_quantile(out.eta_sup, 1.0 - cfg.beta);
  out.bonferroni_sup.assign(cfg.B, 0.0);
  for (std::size_t b = 0; b < cfg.B; ++b)
    for (std::size_t m = 0; m < S.size(); ++m) {
      const double dh = engine.delta(S[m], cfg.eta);
      const double phi = std::min(dh + out.eta_hat / rn, 0.0);
      out.bonferroni_sup[b] =
          std::max(out.bonferroni_sup[b], 0.5 * std::max(rn * (delta_star[b][m] - dh + phi), 0.0));
    }
  return out;
}

inline AntiConfidenceResult step_down(ScopeEngine& engine, const ScopeConfig& cfg) {
  cfg.validate();
  AntiConfidenceResult res;
  res.grid = engine.grid();
  res.benchmark = engine.benchmark();
  res.tau = engine.tau();
  res.tau0 = engine.tau0();
  const std::size_t m = res.grid.size();
  res.q.resize(m);
  res.estimated_scope.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    res.q[i] = engine.q(i, cfg.eta);
    res.estimated_scope[i] = std::abs(res.tau[i] - res.tau0) <= cfg.eta * std::abs(res.tau0) ? 1 : 0;
  }

  std::vector<std::size_t> S;
  for (std::size_t i = 0; i < m; ++i)
    if (i != res.benchmark)
      S.push_back(i);

  for (std::uint64_t step = 1; !S.empty(); ++step) {
    res.active_sets.push_back(S);
    const auto bs = bootstrap_step(engine, S, cfg, step);
    const double critical = cfg.bonferroni ? ceiling_quantile(bs.bonferroni_sup, 1.0 - cfg.alpha + cfg.beta)
                                           : ceiling_quantile(bs.plain_sup, 1.0 - cfg.alpha);
    double sup_q = 0.0;
    for (auto i : S)
      sup_q = std::max(sup_q, res.q[i]);
    res.steps.push_back({S.size(), critical, sup_q, cfg.bonferroni ? bs.eta_hat : 0.0, bs.redraws});
    if (sup_q <= critical)
      break;
    std::vector<std::size_t> next;
    for (auto i : S)
      if (res.q[i] <= critical)
        next.push_back(i);
    if (next == S)
      break;
    S = std::move(next);
  }
  // C_n is the final active set (empty if every hypothesis was rejected).
  res.retained.assign(m, 1);
  for (auto i : S)
    res.retained[i] = 0;
  return res;
}

// ---------------------------------------------------------------------------
// Sample-level entry points

inline double delta_hat(const StratifiedSample& sample, const ShareVector& p, const ScopeConfig& cfg,
                        const SmoothingOptions& opts) {
  const KernelCache cache(sample, opts);
  return delta_from(estimate_ate(cache, p).value, estimate_ate(cache, cfg.p0).value, cfg.eta);
}

inline double q_statistic(const StratifiedSample& sample, const ShareVector& p, const ScopeConfig& cfg,
                          const SmoothingOptions& opts) {
  return q_from_delta(delta_hat(sample, p, cfg, opts), sample.n());
}

// S holds indices into `grid`.
inline std::vector<double> bootstrap_sup_q(const StratifiedSample& sample, const ShareGrid& grid,
                                           const std::vector<std::size_t>& S, const ScopeConfig& cfg,
                                           const SmoothingOptions& opts, BootstrapMode mode,
                                           ResampleHook hook = iid_resample) {
  cfg.validate(1);
  const KernelCache cache(sample, opts);
  ScopeEngine engine(cache, grid, cfg.p0, std::move(hook));
  std::vector<std::size_t> mapped;
  for (auto i : S)
    mapped.push_back(*engine.grid().find(grid[i]));
  const auto bs = bootstrap_step(engine, mapped, cfg, 1);
  return mode == BootstrapMode::plain ? bs.plain_sup : bs.bonferroni_sup;
}

inline double bonferroni_eta(const StratifiedSample& sample, const ShareGrid& grid, const std::vector<std::size_t>& S,
                             const ScopeConfig& cfg, const SmoothingOptions& opts, ResampleHook hook = iid_resample) {
  cfg.validate(1);
  const KernelCache cache(sample, opts);
  ScopeEngine engine(cache, grid, cfg.p0, std::move(hook));
  std::vector<std::size_t> mapped;
  for (auto i : S)
    mapped.push_back(*engine.grid().find(grid[i]));
  return bootstrap_step(engine, mapped, cfg, 1).eta_hat;
}

inline AntiConfidenceResult step_down_anti_confidence(const StratifiedSample& sample, const ShareGrid& grid,
                                                      const ScopeConfig& cfg, const SmoothingOptions& opts,
                                                      ResampleHook hook = iid_resample) {
  const KernelCache cache(sample, opts);
  ScopeEngine engine(cache, grid, cfg.p0, std::move(hook));
  return step_down(engine, cfg);
}

inline std::vector<std::size_t> estimated_scope(const StratifiedSample& sample, const ShareGrid& grid,
                                                const ScopeConfig& cfg, const SmoothingOptions& opts) {
  const KernelCache cache(sample, opts);
  const double tau0 = estimate_ate(cache, cfg.p0).value;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(estimate_ate(cache, grid[i]).value - tau0) <= cfg.eta * std::abs(tau0))
      out.push_back(i);
  return out;
}

struct EtaSweepRow {
  double eta = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t retained = 0;
};

// Anti-confidence bounds across eta values; bootstrap draws are shared.
inline std::vector<EtaSweepRow> eta_sweep(ScopeEngine& engine, ScopeConfig cfg, const std::vector<double>& etas) {
  std::vector<EtaSweepRow> rows;
  for (double eta : etas) {
    cfg.eta = eta;
    const auto res = step_down(engine, cfg);
    const auto b = res.retained_bounds();
    rows.push_back({eta, b.lower, b.upper, res.retained_indices().size()});
  }
  return rows;
}

} // namespace stratfx
