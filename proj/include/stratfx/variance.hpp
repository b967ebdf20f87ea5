#pragma once

// Residual-based variance and covariance estimators for the share-indexed
// estimators, plus the per-stratum design-noise functionals J-hat.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/sample.hpp"

namespace stratfx {

// Which tau estimate centres the treated-arm term of the tet variance.
enum class TetCentering { tet, ate };

// Per-row plug-in components at one share vector. Rows are the cache's
// (virtual) rows; trimmed rows carry used = 0 and NaN entries.
struct ResidualComponents {
  ShareVector p;
  double tau_ate = 0.0;
  double tau_tet = 0.0;
  std::vector<int> used;
  std::vector<double> f_tilde;
  std::vector<std::array<double, 2>> lambda;
  std::vector<std::array<double, 2>> prop;
  std::vector<std::array<double, 2>> mu_tilde;
  std::vector<std::array<double, 2>> beta_tilde;
  std::vector<std::array<double, 2>> e_tilde;
  std::vector<std::array<double, 4>> e_sd_tilde;  // index 2 * s + d
  // Residual entering the tet variance: Y - beta_1 on treated rows,
  // p_1 (Y - beta_0) / p_0 on control rows.
  std::vector<double> e_tet;
  std::vector<std::array<double, 2>> r_ate;
  std::vector<double> r_tet;
  std::vector<double> tau_x;

  double e_sd(std::size_t i, int s, int d) const { return e_sd_tilde[i][2 * s + d]; }
};

inline ResidualComponents residual_components(const KernelCache& cache, const ShareVector& p) {
  cache.require_strata(p);
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = cache.n();
  const double denom = static_cast<double>(n - 1);

  ResidualComponents rc;
  rc.p = p;
  rc.tau_ate = estimate_ate(cache, p).value;
  rc.tau_tet = estimate_tet(cache, p).value;
  rc.used.assign(n, 0);
  rc.f_tilde.assign(n, nan);
  rc.lambda.assign(n, {nan, nan});
  rc.prop.assign(n, {nan, nan});
  rc.mu_tilde.assign(n, {nan, nan});
  rc.beta_tilde.assign(n, {nan, nan});
  rc.e_tilde.assign(n, {nan, nan});
  rc.e_sd_tilde.assign(n, {nan, nan, nan, nan});
  rc.r_ate.assign(n, {nan, nan});
  rc.r_tet.assign(n, nan);
  rc.e_tet.assign(n, nan);
  rc.tau_x.assign(n, nan);

  const std::size_t strata = cache.num_strata();
  // Per-(d,w) sums of tau_x over kept rows, for centring.
  std::vector<double> tau_sum(2 * strata, 0.0);
  std::vector<std::size_t> kept(2 * strata, 0);

  for (std::size_t r = 0; r < n; ++r) {
    const auto& obs = cache.row(r);
    const std::size_t k = cache.profile_of(r);
    const auto pp = profile_propensity(cache, k, p);
    if (!pp.kept)
      continue;
    const auto& sums = cache.sums(k);
    rc.used[r] = 1;
    const double f = pp.lambda[0] + pp.lambda[1];
    rc.f_tilde[r] = f;
    for (int d = 0; d < 2; ++d) {
      rc.lambda[r][d] = pp.lambda[d];
      rc.prop[r][d] = pp.prop[d];
      // Kernel sum of Y among D = d rows in the same cell.
      const double b = sums.b[d] - (obs.d == d ? cache.k0() * obs.y : 0.0);
      const double scale = p(d, obs.w) / cache.q_hat(d, obs.w);
      rc.mu_tilde[r][d] = scale * b / denom / pp.prop[d];
      rc.beta_tilde[r][d] = rc.mu_tilde[r][d] / f;
    }
    for (int d = 0; d < 2; ++d) {
      const double resid = obs.y - rc.beta_tilde[r][d];
      rc.e_tilde[r][d] = resid / pp.prop[d];
      for (int s = 0; s < 2; ++s)
        rc.e_sd_tilde[r][2 * s + d] = pp.prop[d] * resid / pp.prop[s];
    }
    rc.e_tet[r] = obs.d == 1 ? obs.y - rc.beta_tilde[r][1]
                             : pp.prop[1] * (obs.y - rc.beta_tilde[r][0]) / pp.prop[0];
    rc.tau_x[r] = (rc.mu_tilde[r][1] - rc.mu_tilde[r][0]) / f;
    const std::size_t c = cell_index(obs.d, obs.w);
    tau_sum[c] += rc.tau_x[r];
    ++kept[c];
  }

  for (std::size_t r = 0; r < n; ++r) {
    if (!rc.used[r])
      continue;
    const auto& obs = cache.row(r);
    const std::size_t c = cell_index(obs.d, obs.w);
    const double mean_tau = tau_sum[c] / static_cast<double>(kept[c]);
    // tau-hat cancels from a centred deviation; it is kept in the algebra
    // so that the stored value matches the centred-deviation definition.
    const double r_ate = (rc.tau_x[r] - rc.tau_ate) - (mean_tau - rc.tau_ate);
    rc.r_ate[r][obs.d] = r_ate;
    rc.r_ate[r][1 - obs.d] = r_ate;
    if (obs.d == 1)
      rc.r_tet[r] = (rc.tau_x[r] - rc.tau_tet) - (mean_tau - rc.tau_tet);
  }
  return rc;
}

inline ResidualComponents residual_components(const StratifiedSample& sample, const ShareVector& p,
                                              const SmoothingOptions& opts) {
  return residual_components(KernelCache(sample, opts), p);
}

struct CovarianceKernelValue {
  EffectKind kind = EffectKind::ate;
  ShareVector p;
  ShareVector p_alt;
  double value = 0.0;
};

namespace detail {

inline void require_same_rows(const ResidualComponents& a, const ResidualComponents& b) {
  if (a.used.size() != b.used.size())
    fail(ErrorKind::usage, "residual components come from different samples");
}

} // namespace detail

inline double covariance_ate(const KernelCache& cache, const ResidualComponents& a, const ResidualComponents& b) {
  detail::require_same_rows(a, b);
  std::vector<double> cell(2 * cache.num_strata(), 0.0);
  for (std::size_t r = 0; r < cache.n(); ++r) {
    if (!a.used[r] || !b.used[r])
      continue;
    const int d = cache.row(r).d;
    cell[cell_index(d, cache.row(r).w)] += a.e_tilde[r][d] * b.e_tilde[r][d] + a.r_ate[r][d] * b.r_ate[r][d];
  }
  double total = 0.0;
  for (std::size_t w = 0; w < cache.num_strata(); ++w)
    for (int d = 0; d < 2; ++d) {
      const double factor =
          a.p(d, w) * b.p(d, w) / (cache.q_hat(d, w) * static_cast<double>(cache.n_dw(d, w)));
      total += factor * cell[cell_index(d, w)];
    }
  return total;
}

inline double covariance_tet(const KernelCache& cache, const ResidualComponents& a, const ResidualComponents& b,
                             TetCentering centering = TetCentering::tet) {
  detail::require_same_rows(a, b);
  std::vector<double> cell(2 * cache.num_strata(), 0.0);
  for (std::size_t r = 0; r < cache.n(); ++r) {
    if (!a.used[r] || !b.used[r])
      continue;
    const auto& obs = cache.row(r);
    double term;
    if (obs.d == 1) {
      const double ra = centering == TetCentering::tet ? a.r_tet[r] : a.r_ate[r][1];
      const double rb = centering == TetCentering::tet ? b.r_tet[r] : b.r_ate[r][1];
      term = a.e_tet[r] * b.e_tet[r] + ra * rb;
    } else {
      term = a.e_tet[r] * b.e_tet[r];
    }
    cell[cell_index(obs.d, obs.w)] += term;
  }
  double total = 0.0;
  for (std::size_t w = 0; w < cache.num_strata(); ++w)
    for (int d = 0; d < 2; ++d) {
      const double factor =
          a.p(d, w) * b.p(d, w) / (cache.q_hat(d, w) * static_cast<double>(cache.n_dw(d, w)));
      total += factor * cell[cell_index(d, w)];
    }
  return total / (a.p.p1() * b.p.p1());
}

inline double covariance(const KernelCache& cache, const ResidualComponents& a, const ResidualComponents& b,
                         EffectKind kind, TetCentering centering = TetCentering::tet) {
  return kind == EffectKind::ate ? covariance_ate(cache, a, b) : covariance_tet(cache, a, b, centering);
}

inline CovarianceKernelValue covariance_ate(const StratifiedSample& sample, const ShareVector& p,
                                            const ShareVector& p_alt, const SmoothingOptions& opts) {
  const KernelCache cache(sample, opts);
  const auto a = residual_components(cache, p);
  const auto b = residual_components(cache, p_alt);
  return {EffectKind::ate, p, p_alt, covariance_ate(cache, a, b)};
}

inline CovarianceKernelValue covariance_tet(const StratifiedSample& sample, const ShareVector& p,
                                            const ShareVector& p_alt, const SmoothingOptions& opts,
                                            TetCentering centering = TetCentering::tet) {
  const KernelCache cache(sample, opts);
  const auto a = residual_components(cache, p);
  const auto b = residual_components(cache, p_alt);
  return {EffectKind::tet, p, p_alt, covariance_tet(cache, a, b, centering)};
}

using Matrix2 = std::array<std::array<double, 2>, 2>;

inline Matrix2 covariance_matrix(const KernelCache& cache, const ShareVector& p, const ShareVector& p_alt,
                                 EffectKind kind, TetCentering centering = TetCentering::tet) {
  const auto a = residual_components(cache, p);
  const auto b = residual_components(cache, p_alt);
  const double off = covariance(cache, a, b, kind, centering);
  return {{{covariance(cache, a, a, kind, centering), off}, {off, covariance(cache, b, b, kind, centering)}}};
}

inline Matrix2 covariance_matrix(const StratifiedSample& sample, const ShareVector& p, const ShareVector& p_alt,
                                 EffectKind kind, const SmoothingOptions& opts) {
  return covariance_matrix(KernelCache(sample, opts), p, p_alt, kind);
}

// Standard error sigma-hat / sqrt(n) at one share vector.
inline double standard_error(const KernelCache& cache, const ResidualComponents& rc, EffectKind kind,
                             TetCentering centering = TetCentering::tet) {
  const double var = covariance(cache, rc, rc, kind, centering);
  return std::sqrt(std::max(var, 0.0) / static_cast<double>(cache.n()));
}

// J-hat^{ate}_{d,w} = (p_{d,w}^2 / n_{d,w}) sum_{S_{d,w}} [e_d^2 + R_{d,ate}^2].
inline double j_hat(const KernelCache& cache, const ResidualComponents& rc, int d, std::size_t w) {
  if (cache.n_dw(d, w) == 0)
    fail(ErrorKind::empty_stratum, "empty stratum " + stratum_name(d, cache.sample().strata()[w]));
  double s = 0.0;
  for (std::size_t r = 0; r < cache.n(); ++r) {
    const auto& obs = cache.row(r);
    if (!rc.used[r] || obs.d != d || obs.w != w)
      continue;
    s += rc.e_tilde[r][d] * rc.e_tilde[r][d] + rc.r_ate[r][d] * rc.r_ate[r][d];
  }
  const double pdw = rc.p(d, w);
  return pdw * pdw / static_cast<double>(cache.n_dw(d, w)) * s;
}

// J-hat^{tet}_{d,w}: treated arm e_{1,1}^2 + R_{1,tet}^2, control arm
// e_{0,1}^2, both over p1^2.
inline double j_hat_tet(const KernelCache& cache, const ResidualComponents& rc, int d, std::size_t w,
                        TetCentering centering = TetCentering::tet) {
  if (cache.n_dw(d, w) == 0)
    fail(ErrorKind::empty_stratum, "empty stratum " + stratum_name(d, cache.sample().strata()[w]));
  double s = 0.0;
  for (std::size_t r = 0; r < cache.n(); ++r) {
    const auto& obs = cache.row(r);
    if (!rc.used[r] || obs.d != d || obs.w != w)
      continue;
    if (d == 1) {
      const double rr = centering == TetCentering::tet ? rc.r_tet[r] : rc.r_ate[r][1];
      s += rc.e_tet[r] * rc.e_tet[r] + rr * rr;
    } else {
      s += rc.e_tet[r] * rc.e_tet[r];
    }
  }
  const double pdw = rc.p(d, w);
  const double p1 = rc.p.p1();
  return pdw * pdw / static_cast<double>(cache.n_dw(d, w)) * s / (p1 * p1);
}

inline double j_hat(const StratifiedSample& sample, const ShareVector& p, const SmoothingOptions& opts, int d,
                    std::size_t w) {
  const KernelCache cache(sample, opts);
  return j_hat(cache, residual_components(cache, p), d, w);
}

} // namespace stratfx
