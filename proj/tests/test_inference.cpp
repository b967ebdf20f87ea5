#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "stratfx/inference.hpp"

using namespace stratfx;

namespace {

SmoothingOptions opts_for(const StratifiedSample& s) { return SmoothingOptions::defaults(s); }

} // namespace

TEST(Inference, CriticalValue) {
  const auto s = fixtures::discrete(1, 300);
  const auto grid = make_share_grid({0.1, 0.5}, Composition::pure());
  const auto cs = robust_confidence_set(s, grid, 0.05, EffectKind::ate, opts_for(s));
  EXPECT_NEAR(cs.critical, 1.959963984540054, 1e-9);
}

// t is in the union of Wald intervals exactly when the robust statistic
// inf_p T(t, p) is at most the critical value.
TEST(Inference, UnionIdentity) {
  for (auto kind : {EffectKind::ate, EffectKind::tet}) {
    const auto s = fixtures::continuous(2, 400);
    const KernelCache cache(s, opts_for(s));
    const auto grid = make_share_grid(linspace_step(0.05, 0.95, 0.05), Composition::pure());
    const auto cs = robust_confidence_set(cache, grid, 0.1, kind);
    CounterRng rng(5);
    const double lo = cs.hull.lower - 0.5, hi = cs.hull.upper + 0.5;
    for (int k = 0; k < 1000; ++k) {
      const double t = rng.uniform(lo, hi);
      const bool by_stat = robust_test_statistic(cs.points, t, cache.n()) <= cs.critical;
      EXPECT_EQ(cs.contains(t), by_stat) << "t=" << t;
    }
  }
}

TEST(Inference, HullAndComponents) {
  const auto s = fixtures::discrete(3, 1500, 2);
  const KernelCache cache(s, opts_for(s));
  const auto grid = make_share_grid({0.02, 0.3, 0.6, 0.9}, Composition{s.strata(), {0.5, 0.5}});
  const auto cs = robust_confidence_set(cache, grid, 0.05, EffectKind::ate);
  double lo = 1e300, hi = -1e300;
  for (const auto& iv : cs.per_point) {
    lo = std::min(lo, iv.lower);
    hi = std::max(hi, iv.upper);
  }
  EXPECT_EQ(cs.hull.lower, lo);
  EXPECT_EQ(cs.hull.upper, hi);
  ASSERT_FALSE(cs.components.empty());
  EXPECT_EQ(cs.components.front().lower, lo);
  EXPECT_EQ(cs.components.back().upper, hi);
  for (std::size_t k = 1; k < cs.components.size(); ++k)
    EXPECT_GT(cs.components[k].lower, cs.components[k - 1].upper);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_TRUE(cs.per_point[i].contains(cs.points[i].tau));
    EXPECT_NEAR(cs.per_point[i].upper - cs.per_point[i].lower, 2.0 * cs.critical * cs.points[i].se, 1e-12);
  }
}

TEST(Inference, SinglePointSetIsWaldInterval) {
  const auto s = fixtures::discrete(4, 300);
  const KernelCache cache(s, opts_for(s));
  const auto grid = make_share_grid({0.3}, Composition::pure());
  const auto cs = robust_confidence_set(cache, grid, 0.05, EffectKind::ate);
  EXPECT_EQ(cs.hull, cs.per_point.front());
  EXPECT_FALSE(cs.disconnected());
}

TEST(Inference, TStatistic) {
  PointSummary ps;
  ps.tau = 2.0;
  ps.sigma = 4.0;
  EXPECT_NEAR(t_statistic(ps, 1.0, 400), 20.0 * 1.0 / 4.0, 1e-12);
  ps.sigma = 0.0;
  try {
    t_statistic(ps, 1.0, 400);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}

TEST(Inference, ConstantOutcomeHasZeroVariance) {
  std::vector<Observation> rows;
  for (int i = 0; i < 40; ++i)
    rows.push_back({1.0, {}, {static_cast<long>(i % 2)}, (i / 2) % 2, 0});
  const StratifiedSample s(rows, {"all"});
  auto opts = SmoothingOptions::defaults(s);
  EXPECT_THROW(t_statistic(s, 0.0, ShareVector({0.5, 0.5}, s.strata()), EffectKind::ate, opts), Error);
}

TEST(Inference, AlphaRange) {
  const auto s = fixtures::discrete(1, 100);
  const auto grid = make_share_grid({0.1}, Composition::pure());
  EXPECT_THROW(robust_confidence_set(s, grid, 1.5, EffectKind::ate, opts_for(s)), Error);
  EXPECT_THROW(robust_confidence_set(s, grid, 0.0, EffectKind::ate, opts_for(s)), Error);
}
