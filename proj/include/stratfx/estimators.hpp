#pragma once

// Share-indexed point estimators of the ATE and the effect on the treated.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/sample.hpp"

namespace stratfx {

enum class EffectKind { ate, tet };

inline std::string to_string(EffectKind k) { return k == EffectKind::ate ? "ate" : "tet"; }

inline EffectKind parse_effect_kind(const std::string& s) {
  if (s == "ate")
    return EffectKind::ate;
  if (s == "tet")
    return EffectKind::tet;
  fail(ErrorKind::usage, "kind must be 'ate' or 'tet', got '" + s + "'");
}

struct EffectEstimate {
  EffectKind kind = EffectKind::ate;
  ShareVector p;
  double value = 0.0;
  std::size_t n_used = 0;
  // Realised weight sums per arm (G0, G1). For tet, G1 is the treated-term
  // share total and G0 the control ratio denominator.
  double weight_sum[2] = {0.0, 0.0};
};

struct PluginWeights {
  std::vector<double> g;
  std::vector<int> trim;  // 1 = kept
};

// lambda-tilde and p-tilde for one covariate profile at share p.
struct ProfilePropensity {
  double lambda[2] = {0.0, 0.0};
  double prop[2] = {0.0, 0.0};
  bool kept = false;
};

inline ProfilePropensity profile_propensity(const KernelCache& cache, std::size_t k, const ShareVector& p) {
  ProfilePropensity out;
  out.lambda[0] = cache.lambda(k, 0, p);
  out.lambda[1] = cache.lambda(k, 1, p);
  out.kept = !cache.trimmed(k, p);
  const double f = out.lambda[0] + out.lambda[1];
  if (f > 0.0) {
    out.prop[1] = out.lambda[1] / f;
    out.prop[0] = out.lambda[0] / f;
  }
  if (out.kept && !(out.prop[0] > 0.0 && out.prop[1] > 0.0))
    out.kept = false;
  return out;
}

inline PluginWeights plugin_weights(const KernelCache& cache, const ShareVector& p) {
  cache.require_strata(p);
  PluginWeights out;
  out.g.assign(cache.n(), 0.0);
  out.trim.assign(cache.n(), 0);
  for (std::size_t r = 0; r < cache.n(); ++r) {
    const auto& obs = cache.row(r);
    const auto pp = profile_propensity(cache, cache.profile_of(r), p);
    if (!pp.kept)
      continue;
    out.trim[r] = 1;
    out.g[r] = p(obs.d, obs.w) / (static_cast<double>(cache.n_dw(obs.d, obs.w)) * pp.prop[obs.d]);
  }
  return out;
}

inline EffectEstimate estimate_ate(const KernelCache& cache, const ShareVector& p) {
  cache.require_strata(p);
  const auto& index = cache.index();
  EffectEstimate est;
  est.kind = EffectKind::ate;
  est.p = p;
  for (std::size_t k = 0; k < cache.num_profiles(); ++k) {
    const auto& sums = cache.sums(k);
    if (sums.count == 0)
      continue;
    const auto pp = profile_propensity(cache, k, p);
    if (!pp.kept)
      continue;
    const int d = index.profile(k).d;
    const std::size_t w = index.profile(k).w;
    const double g = p(d, w) / (static_cast<double>(cache.n_dw(d, w)) * pp.prop[d]);
    est.value += (d == 1 ? 1.0 : -1.0) * g * sums.sum_y;
    est.weight_sum[d] += g * static_cast<double>(sums.count);
    est.n_used += sums.count;
  }
  if (est.n_used == 0)
    fail(ErrorKind::degenerate, "all rows trimmed");
  return est;
}

inline EffectEstimate estimate_tet(const KernelCache& cache, const ShareVector& p) {
  cache.require_strata(p);
  const auto& index = cache.index();
  const double p1 = p.p1();
  EffectEstimate est;
  est.kind = EffectKind::tet;
  est.p = p;
  double treated = 0.0, num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < cache.num_profiles(); ++k) {
    const auto& sums = cache.sums(k);
    if (sums.count == 0)
      continue;
    const int d = index.profile(k).d;
    const std::size_t w = index.profile(k).w;
    const double share = p(d, w) / static_cast<double>(cache.n_dw(d, w));
    if (d == 1) {
      treated += share * sums.sum_y;
      est.weight_sum[1] += share * static_cast<double>(sums.count);
      est.n_used += sums.count;
      continue;
    }
    const auto pp = profile_propensity(cache, k, p);
    if (!pp.kept)
      continue;
    const double weight = share / pp.prop[0] * pp.prop[1];
    num += weight * sums.sum_y;
    den += weight * static_cast<double>(sums.count);
    est.n_used += sums.count;
  }
  if (!(den > 0.0))
    fail(ErrorKind::degenerate, "all control rows trimmed");
  est.weight_sum[0] = den;
  est.weight_sum[1] /= p1;
  est.value = treated / p1 - num / den;
  return est;
}

inline EffectEstimate estimate(const KernelCache& cache, const ShareVector& p, EffectKind kind) {
  return kind == EffectKind::ate ? estimate_ate(cache, p) : estimate_tet(cache, p);
}

inline PluginWeights plugin_weights(const StratifiedSample& sample, const ShareVector& p,
                                    const SmoothingOptions& opts) {
  return plugin_weights(KernelCache(sample, opts), p);
}

inline EffectEstimate estimate_ate(const StratifiedSample& sample, const ShareVector& p,
                                   const SmoothingOptions& opts) {
  return estimate_ate(KernelCache(sample, opts), p);
}

inline EffectEstimate estimate_tet(const StratifiedSample& sample, const ShareVector& p,
                                   const SmoothingOptions& opts) {
  return estimate_tet(KernelCache(sample, opts), p);
}

// Pure-TBS matching form: mean of treated outcomes minus a kernel-ratio
// weighted control mean. Uses direct pairwise sums (no profile cache) and the
// design-basis trimming rule, so it serves as an independent check of
// estimate_tet.
inline EffectEstimate estimate_tet_pure(const StratifiedSample& sample, const SmoothingOptions& opts) {
  if (!sample.pure())
    fail(ErrorKind::validation, "not pure TBS: sample has " + std::to_string(sample.num_strata()) + " strata");
  opts.validate();
  const std::size_t n = sample.n();
  if (sample.n_dw(1, 0) == 0 || sample.n_dw(0, 0) == 0)
    fail(ErrorKind::empty_stratum, "pure TBS needs treated and control rows");
  const auto& rows = sample.rows();

  double treated = 0.0;
  for (std::size_t i : sample.stratum_rows(1, 0))
    treated += rows[i].y;
  treated /= static_cast<double>(sample.n_dw(1, 0));

  const double denom = static_cast<double>(n - 1);
  double num = 0.0, den = 0.0;
  std::size_t used = sample.n_dw(1, 0);
  for (std::size_t i : sample.stratum_rows(0, 0)) {
    double to_treated = 0.0, to_control = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if ((j == i && opts.leave_one_out) || rows[j].v2 != rows[i].v2)
        continue;
      const double kij = scaled_kernel(opts, rows[j].v1, rows[i].v1);
      (rows[j].d == 1 ? to_treated : to_control) += kij;
    }
    if (!trimming_indicator(to_treated / denom, to_control / denom, opts.delta_n))
      continue;
    const double ratio = to_treated / to_control;
    num += ratio * rows[i].y;
    den += ratio;
    ++used;
  }
  if (!(den > 0.0))
    fail(ErrorKind::degenerate, "all control rows trimmed");
  EffectEstimate est;
  est.kind = EffectKind::tet;
  est.value = treated - num / den;
  est.n_used = used;
  est.weight_sum[0] = den;
  est.weight_sum[1] = 1.0;
  return est;
}

} // namespace stratfx
