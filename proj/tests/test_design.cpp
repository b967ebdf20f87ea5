#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "stratfx/design.hpp"
#include "stratfx/rng.hpp"

using namespace stratfx;

namespace {

DesignNoise noise(std::vector<double> j) {
  DesignNoise n;
  n.j = std::move(j);
  for (std::size_t w = 0; w < n.j.size() / 2; ++w)
    n.strata.push_back("s" + std::to_string(w));
  return n;
}

} // namespace

TEST(Design, MinimumBoundAtOptimalShares) {
  CounterRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> j(2 + 2 * (trial % 3));
    for (auto& v : j)
      v = rng.uniform(0.1, 10.0);
    const auto n = noise(j);
    const auto q = optimal_shares(n);
    double sum = 0.0;
    for (double v : q)
      sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-15);
    const double bound = min_variance_bound(n);
    EXPECT_NEAR(variance_bound(n, q), bound, 1e-12 * bound);
  }
}

TEST(Design, TwoArmGridSearch) {
  const double j1 = 3.0, j0 = 12.0;
  const auto q = optimal_shares(noise({j0, j1}));
  double best_q = 0.0, best_v = 1e300;
  for (int k = 1; k < 100000; ++k) {
    const double x = k / 100000.0;
    const double v = variance_bound_ts(x, j1, j0);
    if (v < best_v) {
      best_v = v;
      best_q = x;
    }
  }
  EXPECT_NEAR(q[1], best_q, 1e-5);
  EXPECT_NEAR(q[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(min_variance_bound(noise({j0, j1})), best_v, 1e-8);
}

TEST(Design, PerturbationNeverImproves) {
  const auto n = noise({2.0, 5.0, 0.5, 1.5});
  const auto q = optimal_shares(n);
  const double v = variance_bound(n, q);
  CounterRng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = q;
    const std::size_t a = rng.below(4), b = (a + 1 + rng.below(3)) % 4;
    const double eps = rng.uniform(-0.05, 0.05) * std::min(x[a], x[b]);
    x[a] += eps;
    x[b] -= eps;
    EXPECT_GE(variance_bound(n, x), v - 1e-12);
  }
}

TEST(Design, ImprovingRange) {
  const double p1 = 0.1, j1 = 4.0, j0 = 1.0;
  const auto r = efficiency_improving_range(p1, j1, j0);
  EXPECT_EQ(r.lower, p1);
  const double rs = variance_bound_rs(p1, j1, j0);
  EXPECT_NEAR(variance_bound_ts(r.upper, j1, j0), rs, 1e-12);
  for (double x = 0.01; x < 1.0; x += 0.01) {
    const bool inside = x > r.lower + 1e-12 && x < r.upper - 1e-12;
    const bool outside = x < r.lower - 1e-12 || x > r.upper + 1e-12;
    if (inside) {
      EXPECT_LT(variance_bound_ts(x, j1, j0), rs);
    }
    if (outside) {
      EXPECT_GT(variance_bound_ts(x, j1, j0), rs);
    }
  }
  const auto flipped = efficiency_improving_range(0.8, 1.0, 4.0);
  EXPECT_EQ(flipped.upper, 0.8);
  EXPECT_LT(flipped.lower, 0.8);
}

TEST(Design, InvalidNoise) {
  EXPECT_THROW(optimal_shares(noise({0.0, 0.0})), Error);
  EXPECT_THROW(optimal_shares(noise({-1.0, 2.0})), Error);
  EXPECT_THROW(variance_bound(noise({1.0, 2.0}), {0.0, 1.0}), Error);
  EXPECT_THROW(efficiency_improving_range(1.0, 1.0, 1.0), Error);
}

TEST(Design, RecommendationFromSample) {
  const auto s = fixtures::continuous(4, 400);
  const auto opts = SmoothingOptions::defaults(s);
  const ShareVector p({0.9, 0.1}, s.strata());
  const auto rec = recommend_design(s, p, EffectKind::ate, opts);
  ASSERT_EQ(rec.q_star.size(), 2u);
  EXPECT_GE(rec.realized_bound, rec.min_bound);
  ASSERT_TRUE(rec.improving_range.has_value());
  // The bound at the realised design is the estimated variance itself.
  const KernelCache cache(s, opts);
  const auto rc = residual_components(cache, p);
  const double var = covariance_ate(cache, rc, rc);
  EXPECT_NEAR(rec.realized_bound, var, 1e-10 * var);
}
