#pragma once

// Synthetic populations, treatment-based sampling from them, population
// truths, and Monte Carlo runners.
//
// Covariates (Spec A: two binary indices sharing a latent shock; Spec B: a
// uniform continuous index and one binary index), participation
// D = 1{a(V1 + V2 - 1) + r + 0.5(W - 0.5) <= 0.5}, and three outcome
// variants. With S = V1 + V2:
//   baseline   Y1 = e0 + (c1 + .5) S/2 + .5 W + t S + 2 * 1{t = 0} + e1
//              Y0 = e0 + (c0 + .5) S/2 + .5 W
//   design_ii  Y1 = e0/2 + (c1 + .5) S/2 + .5 W + t S + 2 + e1/2
//              Y0 = e0/2 + (c0 + .5) S/2 + .5 W
//   w_het      Y1 = e0 + (c1 + .5) S/2 + W + t S + e1, Y0 as baseline
// Pure sampling fixes W = 0.5; nonpure draws W ~ Bernoulli(p_w).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/inference.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/normal.hpp"
#include "stratfx/parallel.hpp"
#include "stratfx/rng.hpp"
#include "stratfx/sample.hpp"
#include "stratfx/scope.hpp"
#include "stratfx/variance.hpp"

namespace stratfx {

enum class CovariateSpec { A, B };
enum class OutcomeVariant { baseline, design_ii, w_heterogeneous };
enum class Sampling { pure, nonpure };

struct DgpSpec {
  CovariateSpec covariates = CovariateSpec::A;
  double a = 0.5;
  double t = 3.0;
  OutcomeVariant outcome = OutcomeVariant::baseline;
  Sampling sampling = Sampling::pure;
  double p_w = 0.2;
  double q1 = 0.5;  // design share of treated
  double q_w = 0.5; // design share of W = 1 (nonpure)
  std::size_t n = 500;
  std::uint64_t seed = 0;

  std::vector<std::string> strata() const {
    return sampling == Sampling::pure ? std::vector<std::string>{"0.5"} : std::vector<std::string>{"0", "1"};
  }
  // W value of stratum code w.
  double w_value(std::size_t w) const { return sampling == Sampling::pure ? 0.5 : static_cast<double>(w); }

  // Population composition: weight of W = 1 is p_w.
  Composition population_composition() const {
    if (sampling == Sampling::pure)
      return {strata(), {1.0}};
    return {strata(), {1.0 - p_w, p_w}};
  }

  ShareVector design() const {
    if (sampling == Sampling::pure)
      return ShareVector({1.0 - q1, q1}, strata());
    return ShareVector({(1.0 - q1) * (1.0 - q_w), q1 * (1.0 - q_w), (1.0 - q1) * q_w, q1 * q_w}, strata());
  }

  ShareVector shares(double p1) const { return population_composition().at(p1); }

  void validate() const {
    if (!(p_w > 0.0 && p_w < 1.0))
      fail(ErrorKind::usage, "p_w must lie in (0,1)");
    if (!(q1 > 0.0 && q1 < 1.0) || !(q_w > 0.0 && q_w < 1.0))
      fail(ErrorKind::usage, "design shares must lie in (0,1)");
    if (n < 2)
      fail(ErrorKind::usage, "sample size must be at least 2");
  }

  // Design I / Design II of the scope experiments (Spec A, pure sampling).
  static DgpSpec design_one() { return {}; }
  static DgpSpec design_two() {
    DgpSpec s;
    s.t = 0.5;
    s.outcome = OutcomeVariant::design_ii;
    return s;
  }
};

struct PopulationUnit {
  double y1 = 0.0;
  double y0 = 0.0;
  double v1 = 0.0;
  double v2 = 0.0;
  double w = 0.5;
  int d = 0;
};

inline PopulationUnit draw_population_unit(const DgpSpec& spec, CounterRng& rng) {
  const double eps0 = rng.normal();
  const double u1 = rng.normal();
  const double u2 = rng.normal();
  const double r = rng.normal();
  const double e0 = rng.normal();
  const double e1 = rng.normal();
  const double c0 = rng.normal();
  const double c1 = rng.normal();
  const double u3 = rng.uniform(-1.0, 1.0);
  const double uw = rng.uniform();

  PopulationUnit u;
  u.v1 = spec.covariates == CovariateSpec::A ? (u1 + eps0 >= 0.0 ? 1.0 : 0.0) : u3;
  u.v2 = u2 + eps0 >= 0.0 ? 1.0 : 0.0;
  u.w = spec.sampling == Sampling::pure ? 0.5 : (uw < spec.p_w ? 1.0 : 0.0);
  const double s = u.v1 + u.v2;
  const double index = spec.a * (s - 1.0) + r + 0.5 * (u.w - 0.5);
  u.d = index <= 0.5 ? 1 : 0;
  switch (spec.outcome) {
  case OutcomeVariant::baseline:
    u.y1 = e0 + (c1 + 0.5) * s / 2.0 + 0.5 * u.w + spec.t * s + (spec.t == 0.0 ? 2.0 : 0.0) + e1;
    u.y0 = e0 + (c0 + 0.5) * s / 2.0 + 0.5 * u.w;
    break;
  case OutcomeVariant::design_ii:
    u.y1 = e0 / 2.0 + (c1 + 0.5) * s / 2.0 + 0.5 * u.w + spec.t * s + 2.0 + e1 / 2.0;
    u.y0 = e0 / 2.0 + (c0 + 0.5) * s / 2.0 + 0.5 * u.w;
    break;
  case OutcomeVariant::w_heterogeneous:
    u.y1 = e0 + (c1 + 0.5) * s / 2.0 + u.w + spec.t * s + e1;
    u.y0 = e0 + (c0 + 0.5) * s / 2.0 + 0.5 * u.w;
    break;
  }
  return u;
}

inline Observation to_observation(const DgpSpec& spec, const PopulationUnit& u, std::size_t w) {
  Observation o;
  o.d = u.d;
  o.w = w;
  o.y = u.d == 1 ? u.y1 : u.y0;
  if (spec.covariates == CovariateSpec::A) {
    o.v2 = {static_cast<long>(u.v1), static_cast<long>(u.v2)};
  } else {
    o.v1 = {u.v1};
    o.v2 = {static_cast<long>(u.v2)};
  }
  return o;
}

inline std::size_t stratum_code(const DgpSpec& spec, double w) {
  return spec.sampling == Sampling::pure ? 0 : static_cast<std::size_t>(w);
}

// Each row draws its (d, w) cell from the design and then population units
// until one lands in that cell. Row i uses stream (seed, i).
inline StratifiedSample draw_tbs_sample(const DgpSpec& spec) {
  spec.validate();
  const ShareVector q = spec.design();
  const auto cells = q.cells();
  std::vector<Observation> rows(spec.n);
  parallel_for(spec.n, [&](std::size_t i) {
    CounterRng rng(derive_key(spec.seed, {0x5A4D, i}));
    const double u = rng.uniform();
    std::size_t cell = cells.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      acc += cells[k];
      if (u < acc) {
        cell = k;
        break;
      }
    }
    const int d = static_cast<int>(cell % 2);
    const std::size_t w = cell / 2;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= 1000000)
        fail(ErrorKind::infeasible, "rejection sampling stalled for stratum " + stratum_name(d, spec.strata()[w]));
      const auto unit = draw_population_unit(spec, rng);
      if (unit.d == d && stratum_code(spec, unit.w) == w) {
        rows[i] = to_observation(spec, unit, w);
        return;
      }
    }
  });
  return StratifiedSample(std::move(rows), spec.strata());
}

// ---------------------------------------------------------------------------
// Population truths

namespace detail {

// E[Y_d | V, W] as a function of S = V1 + V2 and W.
inline double outcome_mean(const DgpSpec& spec, int d, double s, double w) {
  const double base = s / 4.0;
  if (d == 0)
    return base + 0.5 * w;
  switch (spec.outcome) {
  case OutcomeVariant::baseline:
    return base + 0.5 * w + spec.t * s + (spec.t == 0.0 ? 2.0 : 0.0);
  case OutcomeVariant::design_ii:
    return base + 0.5 * w + spec.t * s + 2.0;
  case OutcomeVariant::w_heterogeneous:
    return base + w + spec.t * s;
  }
  return 0.0;
}

// Natural participation probability P(D = 1 | S, W).
inline double participation(const DgpSpec& spec, double s, double w) {
  return normal_cdf(0.5 - spec.a * (s - 1.0) - 0.5 * (w - 0.5));
}

// Quadrature nodes (S, weight) for the law of S = V1 + V2.
inline std::vector<std::pair<double, double>> s_law(const DgpSpec& spec) {
  if (spec.covariates == CovariateSpec::A)
    // (u1 + eps0, u2 + eps0) has correlation 1/2: P(both >= 0) = 1/3.
    return {{0.0, 1.0 / 3.0}, {1.0, 1.0 / 3.0}, {2.0, 1.0 / 3.0}};
  // V1 ~ U(-1,1), V2 ~ Bernoulli(1/2) independent: composite Simpson in V1.
  constexpr int m = 4000;
  std::vector<std::pair<double, double>> nodes;
  nodes.reserve(2 * (m + 1));
  for (int v2 = 0; v2 < 2; ++v2)
    for (int k = 0; k <= m; ++k) {
      const double v1 = -1.0 + 2.0 * k / m;
      const double simpson = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      nodes.emplace_back(v1 + v2, 0.5 * simpson * (2.0 / m) / 3.0 * 0.5);
    }
  return nodes;
}

} // namespace detail

struct Truth {
  double ate = 0.0;
  double tet = 0.0;
};

// Exact truths by enumeration (Spec A) or quadrature (Spec B). Population
// density under share p: f_p(v, w) = f(v) sum_d p_{d,w} pi_d(v,w) / P(D=d|w).
inline Truth exact_truth(const DgpSpec& spec, const ShareVector& p) {
  const auto nodes = detail::s_law(spec);
  Truth out;
  double treated = 0.0;
  for (std::size_t w = 0; w < p.num_strata(); ++w) {
    const double wv = spec.w_value(w);
    double pd1 = 0.0;
    for (auto [s, mass] : nodes)
      pd1 += mass * detail::participation(spec, s, wv);
    const double pd[2] = {1.0 - pd1, pd1};
    for (auto [s, mass] : nodes) {
      const double pi1 = detail::participation(spec, s, wv);
      const double pi[2] = {1.0 - pi1, pi1};
      const double density = mass * (p(0, w) * pi[0] / pd[0] + p(1, w) * pi[1] / pd[1]);
      const double effect = detail::outcome_mean(spec, 1, s, wv) - detail::outcome_mean(spec, 0, s, wv);
      out.ate += density * effect;
      treated += p(1, w) * mass * pi[1] / pd[1] * effect;
    }
  }
  out.tet = treated / p.p1();
  return out;
}

// Monte Carlo plug-in over `reps` natural population draws. Conditional
// outcome means are used in place of outcomes (the outcome noise integrates
// out analytically) and the propensity under share p is the exact Bayes
// transform of the natural participation probability. Integrals against the
// population-at-p covariate law are taken over the same draws for every p:
//   tau_ate(p) = sum_w E[(m1 - m0)(X) sum_d p_{d,w} pi_d(X) / P(D=d|w) | W = w]
//   tau_tet(p) = sum_w p_{1,w} E[(m1 - m0)(X) | D = 1, W = w] / p1
class PopulationTruth {
public:
  PopulationTruth(const DgpSpec& spec, std::size_t reps, std::uint64_t seed) : spec_(spec) {
    if (reps < 1)
      fail(ErrorKind::usage, "truth needs at least one draw");
    const std::size_t strata = spec.strata().size();
    units_.resize(reps);
    CounterRng rng(derive_key(seed, {0x7255}));
    for (auto& u : units_)
      u = draw_population_unit(spec, rng);
    pd1_.assign(strata, 0.0);
    wcount_.assign(strata, 0.0);
    treated_.assign(strata, 0.0);
    tet_sum_.assign(strata, 0.0);
    for (const auto& u : units_) {
      const std::size_t w = stratum_code(spec, u.w);
      const double s = u.v1 + u.v2;
      const double pi1 = detail::participation(spec, s, u.w);
      wcount_[w] += 1.0;
      pd1_[w] += pi1;
      if (u.d == 1) {
        treated_[w] += 1.0;
        tet_sum_[w] += detail::outcome_mean(spec, 1, s, u.w) - detail::outcome_mean(spec, 0, s, u.w);
      }
    }
    for (std::size_t w = 0; w < strata; ++w) {
      if (wcount_[w] == 0.0 || treated_[w] == 0.0)
        fail(ErrorKind::degenerate, "truth draws leave a (d,w) cell empty; increase reps");
      pd1_[w] /= wcount_[w];
    }
  }

  Truth at(const ShareVector& p) const {
    const std::size_t strata = pd1_.size();
    std::vector<double> ate(strata, 0.0);
    for (const auto& u : units_) {
      const std::size_t w = stratum_code(spec_, u.w);
      const double s = u.v1 + u.v2;
      const double pi1 = detail::participation(spec_, s, u.w);
      const double density = p(1, w) * pi1 / pd1_[w] + p(0, w) * (1.0 - pi1) / (1.0 - pd1_[w]);
      ate[w] += density *
                (detail::outcome_mean(spec_, 1, s, u.w) - detail::outcome_mean(spec_, 0, s, u.w));
    }
    Truth t;
    double treated = 0.0;
    for (std::size_t w = 0; w < strata; ++w) {
      t.ate += ate[w] / wcount_[w];
      treated += p(1, w) * tet_sum_[w] / treated_[w];
    }
    t.tet = treated / p.p1();
    return t;
  }

private:
  DgpSpec spec_;
  std::vector<PopulationUnit> units_;
  std::vector<double> pd1_;     // P(D = 1 | W = w) averaged over the draws
  std::vector<double> wcount_;
  std::vector<double> treated_;
  std::vector<double> tet_sum_;
};

inline Truth population_truth(const DgpSpec& spec, const ShareVector& p, std::size_t reps) {
  return PopulationTruth(spec, reps, spec.seed).at(p);
}

// ---------------------------------------------------------------------------
// Monte Carlo runners

struct IdentifiedInterval {
  Interval interval;
  double rl_percent = 0.0;
  std::vector<double> p1;
  std::vector<double> tau;
};

inline IdentifiedInterval mc_identified_interval(const DgpSpec& spec, const std::vector<double>& p1_values,
                                                 std::size_t reps) {
  if (p1_values.empty())
    fail(ErrorKind::usage, "p1 range is empty");
  const PopulationTruth truth(spec, reps, spec.seed);
  IdentifiedInterval out;
  out.p1 = p1_values;
  for (double v : p1_values)
    out.tau.push_back(truth.at(spec.shares(v)).ate);
  out.interval = {*std::min_element(out.tau.begin(), out.tau.end()),
                  *std::max_element(out.tau.begin(), out.tau.end())};
  out.rl_percent = 100.0 * (out.interval.upper - out.interval.lower) / out.interval.lower;
  return out;
}

struct SizeCell {
  double p1 = 0.0;
  EffectKind kind = EffectKind::ate;
  double truth = 0.0;
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double sum_err = 0.0;
  double sum_abs_err = 0.0;
  double sum_sq_err = 0.0;

  double rejection_rate() const { return static_cast<double>(rejections) / static_cast<double>(reps); }
  double bias() const { return sum_err / static_cast<double>(reps); }
  double mad() const { return sum_abs_err / static_cast<double>(reps); }
  double mse() const { return sum_sq_err / static_cast<double>(reps); }
  double variance() const { return mse() - bias() * bias(); }
};

struct McReport {
  std::vector<SizeCell> cells;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::size_t failures = 0;  // replications dropped on numerical errors
};

// Per rep: draw a sample, estimate both effects at each p1 with default
// smoothing, and test H0: tau(p) = truth at level alpha.
inline McReport mc_test_size(const DgpSpec& spec, const std::vector<double>& p1_values, std::size_t reps,
                             double alpha) {
  spec.validate();
  const double crit = normal_quantile(1.0 - alpha / 2.0);
  const std::size_t m = p1_values.size();
  std::vector<ShareVector> shares;
  std::vector<Truth> truth;
  for (double v : p1_values) {
    shares.push_back(spec.shares(v));
    truth.push_back(exact_truth(spec, shares.back()));
  }
  struct RepResult {
    bool ok = false;
    std::vector<std::array<double, 2>> err;  // [point][kind]
    std::vector<std::array<int, 2>> reject;
  };
  std::vector<RepResult> results(reps);
  parallel_for(reps, [&](std::size_t r) {
    DgpSpec rep_spec = spec;
    rep_spec.seed = derive_key(spec.seed, {0x512E, r});
    RepResult res;
    try {
      const auto sample = draw_tbs_sample(rep_spec);
      const KernelCache cache(sample, SmoothingOptions::defaults(sample));
      res.err.resize(m);
      res.reject.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        const auto rc = residual_components(cache, shares[i]);
        for (int k = 0; k < 2; ++k) {
          const EffectKind kind = k == 0 ? EffectKind::ate : EffectKind::tet;
          const double tau = k == 0 ? rc.tau_ate : rc.tau_tet;
          const double sigma = std::sqrt(std::max(covariance(cache, rc, rc, kind), 0.0));
          const double target = k == 0 ? truth[i].ate : truth[i].tet;
          res.err[i][k] = tau - target;
          const double stat = std::sqrt(static_cast<double>(cache.n())) * std::abs(tau - target) / sigma;
          res.reject[i][k] = stat > crit ? 1 : 0;
        }
      }
      res.ok = true;
    } catch (const Error&) {
      res.ok = false;
    }
    results[r] = std::move(res);
  });

  McReport report;
  report.reps = reps;
  report.seed = spec.seed;
  for (std::size_t i = 0; i < m; ++i)
    for (int k = 0; k < 2; ++k) {
      SizeCell cell;
      cell.p1 = p1_values[i];
      cell.kind = k == 0 ? EffectKind::ate : EffectKind::tet;
      cell.truth = k == 0 ? truth[i].ate : truth[i].tet;
      for (const auto& res : results) {
        if (!res.ok)
          continue;
        ++cell.reps;
        cell.rejections += static_cast<std::size_t>(res.reject[i][k]);
        const double e = res.err[i][k];
        cell.sum_err += e;
        cell.sum_abs_err += std::abs(e);
        cell.sum_sq_err += e * e;
      }
      report.cells.push_back(cell);
    }
  for (const auto& res : results)
    report.failures += res.ok ? 0 : 1;
  return report;
}

struct AntiConfidenceSummary {
  std::size_t sims = 0;
  double mean_lower = 0.0;
  double mean_upper = 0.0;
  double fwer = 0.0;
  double singleton_rate = 0.0;  // share of sims retaining only p0
  Interval true_scope;          // p1 hull of the true scope on the grid
  std::vector<int> true_scope_flags;
  std::vector<Interval> bounds;  // per simulation
  std::size_t failures = 0;
};

inline AntiConfidenceSummary mc_anti_confidence(const DgpSpec& spec, const ScopeConfig& cfg,
                                                const std::vector<double>& p1_grid, std::size_t sims) {
  spec.validate();
  cfg.validate();
  const Composition comp = spec.population_composition();
  const ShareGrid grid = ensure_benchmark(make_share_grid(p1_grid, comp), cfg.p0);
  const double tau0 = exact_truth(spec, cfg.p0).ate;
  AntiConfidenceSummary out;
  out.true_scope_flags.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    out.true_scope_flags[i] =
        std::abs(exact_truth(spec, grid[i]).ate - tau0) <= cfg.eta * std::abs(tau0) ? 1 : 0;
  {
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (out.true_scope_flags[i]) {
        lo = std::min(lo, grid.p1_values()[i]);
        hi = std::max(hi, grid.p1_values()[i]);
      }
    out.true_scope = {lo, hi};
  }

  struct SimResult {
    bool ok = false;
    Interval bounds;
    bool violation = false;
    bool singleton = false;
  };
  std::vector<SimResult> results(sims);
  parallel_for(sims, [&](std::size_t s) {
    DgpSpec sim_spec = spec;
    sim_spec.seed = derive_key(spec.seed, {0xAC5, s});
    ScopeConfig sim_cfg = cfg;
    sim_cfg.seed = derive_key(cfg.seed, {0xB007, s});
    SimResult res;
    try {
      const auto sample = draw_tbs_sample(sim_spec);
      const KernelCache cache(sample, SmoothingOptions::defaults(sample));
      ScopeEngine engine(cache, grid, cfg.p0);
      const auto acs = step_down(engine, sim_cfg);
      res.bounds = acs.retained_bounds();
      const auto idx = acs.retained_indices();
      res.singleton = idx.size() == 1;
      for (auto i : idx)
        if (!out.true_scope_flags[i])
          res.violation = true;
      res.ok = true;
    } catch (const Error&) {
      res.ok = false;
    }
    results[s] = res;
  });

  std::size_t violations = 0, singletons = 0;
  for (const auto& r : results) {
    if (!r.ok) {
      ++out.failures;
      continue;
    }
    ++out.sims;
    out.mean_lower += r.bounds.lower;
    out.mean_upper += r.bounds.upper;
    out.bounds.push_back(r.bounds);
    violations += r.violation ? 1 : 0;
    singletons += r.singleton ? 1 : 0;
  }
  if (out.sims > 0) {
    const double k = static_cast<double>(out.sims);
    out.mean_lower /= k;
    out.mean_upper /= k;
    out.fwer = static_cast<double>(violations) / k;
    out.singleton_rate = static_cast<double>(singletons) / k;
  }
  return out;
}

} // namespace stratfx
