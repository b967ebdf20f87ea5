#pragma once

// Optimal sampling design: square-root allocation, the minimum bound, the
// two-arm variance bound as a function of q1, and the range of design shares
// that improve on random sampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/inference.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/sample.hpp"
#include "stratfx/variance.hpp"

namespace stratfx {

// Noise functionals J_{d,w} in flat (2w + d) order.
struct DesignNoise {
  std::vector<double> j;
  std::vector<std::string> strata;
  EffectKind kind = EffectKind::ate;

  void validate() const {
    if (j.empty() || j.size() != 2 * strata.size())
      fail(ErrorKind::usage, "design noise must cover {0,1} x strata");
    bool positive = false;
    for (double v : j) {
      if (!(v >= 0.0) || !std::isfinite(v))
        fail(ErrorKind::domain, "design noise entries must be finite and nonnegative");
      positive = positive || v > 0.0;
    }
    if (!positive)
      fail(ErrorKind::degenerate, "design noise is identically zero");
  }
};

inline std::vector<double> optimal_shares(const DesignNoise& noise) {
  noise.validate();
  double total = 0.0;
  for (double v : noise.j)
    total += std::sqrt(v);
  std::vector<double> q(noise.j.size());
  double rest = 0.0;
  for (std::size_t k = 0; k + 1 < q.size(); ++k) {
    q[k] = std::sqrt(noise.j[k]) / total;
    rest += q[k];
  }
  q.back() = 1.0 - rest;
  return q;
}

inline double min_variance_bound(const DesignNoise& noise) {
  noise.validate();
  double total = 0.0;
  for (double v : noise.j)
    total += std::sqrt(v);
  return total * total;
}

// sum_{d,w} J_{d,w} / q_{d,w}.
inline double variance_bound(const DesignNoise& noise, const std::vector<double>& q) {
  noise.validate();
  if (q.size() != noise.j.size())
    fail(ErrorKind::usage, "design shares and noise have different sizes");
  double v = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (!(q[k] > 0.0 && q[k] < 1.0))
      fail(ErrorKind::domain, "design shares must lie in (0,1)");
    v += noise.j[k] / q[k];
  }
  return v;
}

inline double variance_bound_ts(double q1, double j1, double j0) {
  if (!(q1 > 0.0 && q1 < 1.0))
    fail(ErrorKind::domain, "q1 must lie in (0,1)");
  return j1 / q1 + j0 / (1.0 - q1);
}

// Random sampling draws in population proportions: q1 = p1.
inline double variance_bound_rs(double p1, double j1, double j0) { return variance_bound_ts(p1, j1, j0); }

inline Interval efficiency_improving_range(double p1, double j1, double j0) {
  if (!(p1 > 0.0 && p1 < 1.0))
    fail(ErrorKind::domain, "p1 must lie in (0,1)");
  if (!(j1 > 0.0 && j0 > 0.0))
    fail(ErrorKind::domain, "noise functionals must be positive");
  const double r = (1.0 - p1) * j1 / ((1.0 - p1) * j1 + p1 * j0);
  return {std::min(p1, r), std::max(p1, r)};
}

struct DesignRecommendation {
  DesignNoise noise;
  std::vector<double> q_star;
  std::vector<double> q_hat;
  double min_bound = 0.0;
  double realized_bound = 0.0;  // the bound at the realised design q-hat
  std::optional<Interval> improving_range;
};

inline DesignNoise estimate_noise(const KernelCache& cache, const ShareVector& p, EffectKind kind) {
  const auto rc = residual_components(cache, p);
  DesignNoise noise;
  noise.kind = kind;
  noise.strata = cache.sample().strata();
  noise.j.resize(2 * cache.num_strata());
  for (std::size_t w = 0; w < cache.num_strata(); ++w)
    for (int d = 0; d < 2; ++d)
      noise.j[cell_index(d, w)] = kind == EffectKind::ate ? j_hat(cache, rc, d, w) : j_hat_tet(cache, rc, d, w);
  return noise;
}

inline DesignRecommendation recommend_design(const KernelCache& cache, const ShareVector& p, EffectKind kind) {
  DesignRecommendation rec;
  rec.noise = estimate_noise(cache, p, kind);
  rec.q_star = optimal_shares(rec.noise);
  rec.min_bound = min_variance_bound(rec.noise);
  for (std::size_t w = 0; w < cache.num_strata(); ++w)
    for (int d = 0; d < 2; ++d)
      rec.q_hat.push_back(cache.q_hat(d, w));
  rec.realized_bound = variance_bound(rec.noise, rec.q_hat);
  if (cache.num_strata() == 1) {
    const double j1 = rec.noise.j[cell_index(1, 0)];
    const double j0 = rec.noise.j[cell_index(0, 0)];
    if (j1 > 0.0 && j0 > 0.0)
      rec.improving_range = efficiency_improving_range(p.p1(), j1, j0);
  }
  return rec;
}

inline DesignRecommendation recommend_design(const StratifiedSample& sample, const ShareVector& p, EffectKind kind,
                                             const SmoothingOptions& opts) {
  return recommend_design(KernelCache(sample, opts), p, kind);
}

} // namespace stratfx
