#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/rng.hpp"

using namespace stratfx;

namespace {

SmoothingOptions options_for(const StratifiedSample& s, bool loo, double h = 0.3) {
  auto o = SmoothingOptions::defaults(s);
  o.h = h;
  o.leave_one_out = loo;
  return o;
}

// Textbook quartic written out independently of the library.
double biweight(double u) { return std::abs(u) <= 1.0 ? 15.0 / 16.0 * std::pow(1.0 - u * u, 2) : 0.0; }

double brute_lambda(const StratifiedSample& s, const ShareVector& p, double h, bool loo, std::size_t i, int d) {
  const auto& xi = s.row(i);
  double sum = 0.0;
  for (std::size_t j = 0; j < s.n(); ++j) {
    const auto& xj = s.row(j);
    if ((loo && j == i) || xj.d != d || xj.w != xi.w || xj.v2 != xi.v2)
      continue;
    double k = 1.0;
    for (std::size_t m = 0; m < xi.v1.size(); ++m)
      k *= biweight((xj.v1[m] - xi.v1[m]) / h) / h;
    sum += k;
  }
  return p(d, xi.w) / s.q_hat(d, xi.w) * sum / static_cast<double>(s.n() - 1);
}

} // namespace

TEST(Kernel, QuarticShape) {
  EXPECT_DOUBLE_EQ(quartic(0.0), 15.0 / 16.0);
  EXPECT_EQ(quartic(1.0), 0.0);
  EXPECT_EQ(quartic(-1.5), 0.0);
  for (double u = -1.2; u <= 1.2; u += 0.05)
    EXPECT_NEAR(quartic(u), quartic(-u), 1e-15);
  double mass = 0.0;
  const int m = 100000;
  for (int k = 0; k < m; ++k) {
    const double u = -1.0 + (k + 0.5) * 2.0 / m;
    mass += quartic(u) * 2.0 / m;
  }
  EXPECT_NEAR(mass, 1.0, 1e-8);
}

TEST(Kernel, ProductKernel) {
  const KernelSpec spec(KernelFamily::quartic, 2);
  const std::vector<double> u{0.3, -0.6};
  EXPECT_NEAR(kernel_eval(spec, u), quartic(0.3) * quartic(-0.6), 1e-15);
  EXPECT_EQ(kernel_eval(spec, std::vector<double>{0.3, 1.2}), 0.0);
}

TEST(Kernel, RuleOfThumbBandwidth) {
  const auto s = fixtures::continuous(3, 200);
  double mean = 0.0, ss = 0.0;
  for (const auto& r : s.rows())
    mean += r.v1[0];
  mean /= 200.0;
  for (const auto& r : s.rows())
    ss += (r.v1[0] - mean) * (r.v1[0] - mean);
  const double expected = 2.78 * std::sqrt(ss / 199.0) * std::pow(200.0, -1.0 / 3.0);
  EXPECT_NEAR(rule_of_thumb_bandwidth(s, 0), expected, 1e-12);
  EXPECT_NEAR(default_bandwidth(s), expected, 1e-12);
  EXPECT_NEAR(SmoothingOptions::defaults(s).delta_n, 1.0 / std::sqrt(200.0), 1e-15);
}

TEST(Kernel, ConstantCovariateIsDegenerate) {
  std::vector<Observation> rows(4);
  for (std::size_t i = 0; i < 4; ++i) {
    rows[i].v1 = {1.0};
    rows[i].d = static_cast<int>(i % 2);
  }
  const StratifiedSample s(rows, {"all"});
  EXPECT_THROW(rule_of_thumb_bandwidth(s, 0), Error);
}

TEST(Kernel, DirectLambdaMatchesBruteForce) {
  const auto s = fixtures::continuous(11, 150, 2);
  const ShareVector p({0.5, 0.2, 0.25, 0.05}, s.strata());
  for (bool loo : {true, false}) {
    const auto opts = options_for(s, loo);
    for (std::size_t i = 0; i < s.n(); i += 7)
      for (int d = 0; d < 2; ++d)
        EXPECT_NEAR(lambda_tilde(s, p, opts, i, d), brute_lambda(s, p, opts.h, loo, i, d), 1e-12);
  }
}

TEST(Kernel, CacheMatchesDirectEvaluation) {
  const auto s = fixtures::continuous(12, 120, 2);
  const ShareVector p({0.3, 0.2, 0.4, 0.1}, s.strata());
  for (bool loo : {true, false}) {
    const auto opts = options_for(s, loo);
    const KernelCache cache(s, opts);
    for (std::size_t i = 0; i < s.n(); ++i) {
      const auto k = cache.profile_of(i);
      for (int d = 0; d < 2; ++d)
        EXPECT_NEAR(cache.lambda(k, d, p), brute_lambda(s, p, opts.h, loo, i, d), 1e-12);
    }
  }
}

// With no continuous covariates and p = q-hat, p-tilde is the empirical
// treatment frequency in the row's (v2, w) cell, with or without the row.
TEST(Kernel, DiscretePropensityIsCellFrequency) {
  const auto s = fixtures::discrete(5, 240, 2);
  const ShareVector q({s.q_hat(0, 0), s.q_hat(1, 0), s.q_hat(0, 1), s.q_hat(1, 1)}, s.strata());
  for (bool loo : {true, false}) {
    const auto opts = options_for(s, loo);
    for (std::size_t i = 0; i < s.n(); ++i) {
      double treated = 0.0, total = 0.0;
      for (std::size_t j = 0; j < s.n(); ++j) {
        if ((loo && j == i) || s.row(j).w != s.row(i).w || s.row(j).v2 != s.row(i).v2)
          continue;
        total += 1.0;
        treated += s.row(j).d;
      }
      const auto [p1, p0] = propensity_tilde(s, q, opts, i);
      EXPECT_NEAR(p1, treated / total, 1e-12);
      EXPECT_NEAR(p0, 1.0 - treated / total, 1e-12);
    }
  }
}

TEST(Kernel, PropensitySumsToOne) {
  const auto s = fixtures::continuous(21, 90);
  const ShareVector p({0.9, 0.1}, s.strata());
  const auto opts = options_for(s, false);
  for (std::size_t i = 0; i < s.n(); ++i) {
    const auto [a, b] = propensity_tilde(s, p, opts, i);
    EXPECT_NEAR(a + b, 1.0, 1e-15);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Kernel, IsolatedPointRaises) {
  std::vector<Observation> rows{{0.0, {0.0}, {}, 1, 0}, {0.0, {0.1}, {}, 0, 0}, {0.0, {5.0}, {}, 1, 0}};
  const StratifiedSample s(rows, {"all"});
  auto opts = options_for(s, true, 0.5);
  const ShareVector p({0.5, 0.5}, s.strata());
  try {
    propensity_tilde(s, p, opts, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::isolated_point);
  }
}

TEST(Kernel, TrimmingBoundaryInclusive) {
  EXPECT_EQ(trimming_indicator(0.05, 0.2, 0.05), 1);
  EXPECT_EQ(trimming_indicator(0.2, std::nextafter(0.05, 0.0), 0.05), 0);
  EXPECT_EQ(trimming_indicator(0.0, 0.0, 1e-9), 0);
}

TEST(Kernel, DuplicateRowsShareProfiles) {
  auto base = fixtures::discrete(8, 40);
  auto rows = base.rows();
  const auto copy = rows;
  rows.insert(rows.end(), copy.begin(), copy.end());
  const StratifiedSample s(rows, base.strata());
  const auto opts = options_for(s, true);
  const KernelCache cache(s, opts);
  EXPECT_LT(cache.num_profiles(), s.n());
  const ShareVector p({0.7, 0.3}, s.strata());
  for (std::size_t i = 0; i < s.n(); ++i)
    for (int d = 0; d < 2; ++d)
      EXPECT_NEAR(cache.lambda(cache.profile_of(i), d, p), brute_lambda(s, p, 1.0, true, i, d), 1e-12);
}

// A cache over a row multiset equals a cache over the materialised sample.
TEST(Kernel, ResampledCacheMatchesMaterialisedSample) {
  const auto s = fixtures::continuous(31, 80, 2);
  const auto opts = options_for(s, false);
  CounterRng rng(99);
  std::vector<std::size_t> rows(s.n());
  for (auto& r : rows)
    r = rng.below(s.n());
  std::vector<Observation> drawn;
  for (auto r : rows)
    drawn.push_back(s.row(r));
  const StratifiedSample m(drawn, s.strata());

  const KernelCache full(s, opts);
  const KernelCache virt(full.shared_index(), opts, rows);
  const KernelCache mat(m, opts);
  const ShareVector p({0.35, 0.15, 0.35, 0.15}, s.strata());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int d = 0; d < 2; ++d)
      EXPECT_NEAR(virt.lambda(virt.profile_of(r), d, p), mat.lambda(mat.profile_of(r), d, p), 1e-12);
}

TEST(Kernel, OptionValidation) {
  SmoothingOptions o;
  o.h = 0.0;
  o.delta_n = 0.1;
  EXPECT_THROW(o.validate(), Error);
  o.h = 1.0;
  o.delta_n = 0.0;
  EXPECT_THROW(o.validate(), Error);
  EXPECT_THROW(parse_kernel_family("gaussian"), Error);
}
