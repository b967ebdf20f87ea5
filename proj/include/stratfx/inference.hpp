#pragma once

// Wald statistics at a share vector and robust confidence sets over a grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/normal.hpp"
#include "stratfx/parallel.hpp"
#include "stratfx/sample.hpp"
#include "stratfx/variance.hpp"

namespace stratfx {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double t) const { return lower <= t && t <= upper; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Point estimate and sigma-hat at one share vector.
struct PointSummary {
  double tau = 0.0;
  double sigma = 0.0;  // sigma-hat(p), so se = sigma / sqrt(n)
  double se = 0.0;
  std::size_t n_used = 0;
};

inline PointSummary summarize(const KernelCache& cache, const ShareVector& p, EffectKind kind,
                              TetCentering centering = TetCentering::tet) {
  const auto est = estimate(cache, p, kind);
  const auto rc = residual_components(cache, p);
  const double var = covariance(cache, rc, rc, kind, centering);
  PointSummary s;
  s.tau = est.value;
  s.sigma = std::sqrt(std::max(var, 0.0));
  s.se = s.sigma / std::sqrt(static_cast<double>(cache.n()));
  s.n_used = est.n_used;
  return s;
}

inline std::vector<PointSummary> summarize_grid(const KernelCache& cache, const ShareGrid& grid, EffectKind kind,
                                                TetCentering centering = TetCentering::tet) {
  std::vector<PointSummary> out(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) { out[i] = summarize(cache, grid[i], kind, centering); });
  return out;
}

inline double t_statistic(const PointSummary& s, double t, std::size_t n) {
  if (!(s.sigma > 0.0))
    fail(ErrorKind::degenerate, "zero variance estimate");
  return std::sqrt(static_cast<double>(n)) * std::abs(s.tau - t) / s.sigma;
}

inline double t_statistic(const StratifiedSample& sample, double t, const ShareVector& p, EffectKind kind,
                          const SmoothingOptions& opts) {
  const KernelCache cache(sample, opts);
  return t_statistic(summarize(cache, p, kind), t, cache.n());
}

inline double robust_test_statistic(const std::vector<PointSummary>& points, double t, std::size_t n) {
  if (points.empty())
    fail(ErrorKind::usage, "share grid is empty");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : points)
    best = std::min(best, t_statistic(s, t, n));
  return best;
}

inline double robust_test_statistic(const StratifiedSample& sample, double t, const ShareGrid& grid,
                                    EffectKind kind, const SmoothingOptions& opts) {
  const KernelCache cache(sample, opts);
  return robust_test_statistic(summarize_grid(cache, grid, kind), t, cache.n());
}

struct RobustConfidenceSet {
  EffectKind kind = EffectKind::ate;
  ShareGrid grid;
  double alpha = 0.05;
  double critical = 0.0;
  std::vector<PointSummary> points;
  std::vector<Interval> per_point;
  Interval hull;
  std::vector<Interval> components;  // connected pieces of the union, sorted

  bool disconnected() const { return components.size() > 1; }

  bool contains(double t) const {
    return std::any_of(per_point.begin(), per_point.end(), [&](const Interval& iv) { return iv.contains(t); });
  }
};

inline RobustConfidenceSet robust_confidence_set(const KernelCache& cache, const ShareGrid& grid, double alpha,
                                                 EffectKind kind, TetCentering centering = TetCentering::tet) {
  if (!(alpha > 0.0 && alpha < 1.0))
    fail(ErrorKind::usage, "alpha must lie in (0,1)");
  RobustConfidenceSet cs;
  cs.kind = kind;
  cs.grid = grid;
  cs.alpha = alpha;
  cs.critical = normal_quantile(1.0 - alpha / 2.0);
  cs.points = summarize_grid(cache, grid, kind, centering);
  for (const auto& s : cs.points)
    cs.per_point.push_back({s.tau - cs.critical * s.se, s.tau + cs.critical * s.se});

  cs.hull = cs.per_point.front();
  for (const auto& iv : cs.per_point) {
    cs.hull.lower = std::min(cs.hull.lower, iv.lower);
    cs.hull.upper = std::max(cs.hull.upper, iv.upper);
  }
  auto sorted = cs.per_point;
  std::sort(sorted.begin(), sorted.end(), [](const Interval& a, const Interval& b) { return a.lower < b.lower; });
  for (const auto& iv : sorted) {
    if (!cs.components.empty() && iv.lower <= cs.components.back().upper)
      cs.components.back().upper = std::max(cs.components.back().upper, iv.upper);
    else
      cs.components.push_back(iv);
  }
  return cs;
}

inline RobustConfidenceSet robust_confidence_set(const StratifiedSample& sample, const ShareGrid& grid,
                                                 double alpha, EffectKind kind, const SmoothingOptions& opts) {
  return robust_confidence_set(KernelCache(sample, opts), grid, alpha, kind);
}

} // namespace stratfx
