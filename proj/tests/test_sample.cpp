#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "fixtures.hpp"
#include "stratfx/sample.hpp"

using namespace stratfx;

namespace {

StratifiedSample parse(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return read_sample(in, schema);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::usage;
}

} // namespace

TEST(Sample, StratumBookkeeping) {
  const auto s = fixtures::discrete(1, 101, 3);
  std::size_t total = 0;
  double q = 0.0;
  std::vector<int> seen(s.n(), 0);
  for (std::size_t w = 0; w < s.num_strata(); ++w)
    for (int d = 0; d < 2; ++d) {
      total += s.n_dw(d, w);
      q += s.q_hat(d, w);
      for (auto i : s.stratum_rows(d, w)) {
        ++seen[i];
        EXPECT_EQ(s.row(i).d, d);
        EXPECT_EQ(s.row(i).w, w);
      }
    }
  EXPECT_EQ(total, s.n());
  EXPECT_NEAR(q, 1.0, 1e-15);
  for (int c : seen)
    EXPECT_EQ(c, 1);
}

TEST(Sample, ReadsLabelsAndSortsThem) {
  const auto s = parse("y,d,region,x,k\n1.5,1,north,0.2,3\n2,0,south,0.1,1\n-1,0,north,0.4,2\n",
                       {"y", "d", "region", {"x"}, {"k"}});
  ASSERT_EQ(s.n(), 3u);
  EXPECT_EQ(s.strata(), (std::vector<std::string>{"north", "south"}));
  EXPECT_EQ(s.n_dw(1, 0), 1u);
  EXPECT_EQ(s.n_dw(0, 0), 1u);
  EXPECT_EQ(s.n_dw(0, 1), 1u);
  EXPECT_DOUBLE_EQ(s.row(0).v1[0], 0.2);
  EXPECT_EQ(s.row(2).v2[0], 2);
}

TEST(Sample, StratumColumnOptionalForPureSampling) {
  const auto s = parse("y,d\n1,1\n2,0\n", {"y", "d", "", {}, {}});
  EXPECT_TRUE(s.pure());
  EXPECT_EQ(s.strata().front(), "all");
}

TEST(Sample, CsvRoundTripIsExact) {
  const auto s = fixtures::continuous(7, 60, 2);
  std::stringstream buf;
  write_sample(buf, s);
  const auto back = read_sample(buf, default_schema(s));
  EXPECT_EQ(back, s);
}

TEST(Sample, IngestionErrors) {
  const Schema schema{"y", "d", "w", {}, {}};
  EXPECT_EQ(kind_of([&] { parse("y,d\n1,0\n", schema); }), ErrorKind::schema);
  EXPECT_EQ(kind_of([&] { parse("", schema); }), ErrorKind::empty_input);
  EXPECT_EQ(kind_of([&] { parse("y,d,w\n", schema); }), ErrorKind::empty_input);
  EXPECT_EQ(kind_of([&] { parse("y,d,w\n1,2,a\n", schema); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([&] { parse("y,d,w\n1,1,a\n,0,a\n", schema); }), ErrorKind::validation);
  try {
    parse("y,d,w\n1,1,a\n2,0,a\n,0,a\n", schema);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
  EXPECT_EQ(kind_of([&] { load_sample("/nonexistent/file.csv", schema); }), ErrorKind::io);
}

TEST(ShareVector, OpenSimplex) {
  const std::vector<std::string> strata{"a", "b"};
  EXPECT_NO_THROW(ShareVector({0.1, 0.2, 0.3, 0.4}, strata));
  EXPECT_EQ(kind_of([&] { ShareVector({0.0, 0.3, 0.3, 0.4}, strata); }), ErrorKind::simplex);
  EXPECT_EQ(kind_of([&] { ShareVector({0.1, 0.2, 0.3, 0.41}, strata); }), ErrorKind::simplex);
  EXPECT_EQ(kind_of([&] { ShareVector({0.5, 0.5}, strata); }), ErrorKind::simplex);
  // Tolerance is 1e-12 absolute.
  EXPECT_NO_THROW(ShareVector({0.1, 0.2, 0.3, 0.4 + 5e-13}, strata));
  EXPECT_EQ(kind_of([&] { ShareVector({0.1, 0.2, 0.3, 0.4 + 5e-12}, strata); }), ErrorKind::simplex);
}

TEST(ShareVector, DeficitReported) {
  try {
    ShareVector({0.1, 0.2, 0.3, 0.3}, {"a", "b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("deficit"), std::string::npos);
  }
}

TEST(ShareVector, FromMap) {
  RawShares raw{{{1, "a"}, 0.05}, {{0, "a"}, 0.55}, {{1, "b"}, 0.1}, {{0, "b"}, 0.3}};
  const auto p = validate_share_vector(raw, {"a", "b"});
  EXPECT_NEAR(p.p1(), 0.15, 1e-15);
  EXPECT_EQ(p(0, 1), 0.3);
  raw.erase({0, "b"});
  EXPECT_EQ(kind_of([&] { validate_share_vector(raw, {"a", "b"}); }), ErrorKind::simplex);
}

TEST(ShareGrid, CompositionGrid) {
  const Composition comp{{"a", "b"}, {0.8, 0.2}};
  const auto grid = make_share_grid({0.05, 0.1, 0.5}, comp);
  ASSERT_EQ(grid.size(), 3u);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(grid[i].p1(), grid.p1_values()[i], 1e-15);
    EXPECT_NEAR(grid[i](1, 1) / grid[i](1, 0), 0.25, 1e-12);
  }
  EXPECT_EQ(kind_of([&] { make_share_grid({0.1, 0.1}, comp); }), ErrorKind::duplicate);
  EXPECT_EQ(kind_of([&] { make_share_grid({0.0, 0.1}, comp); }), ErrorKind::simplex);
  EXPECT_EQ(kind_of([&] { ShareGrid(std::vector<ShareVector>{}); }), ErrorKind::usage);
}

TEST(ShareGrid, LinspaceHitsRoundValues) {
  const auto v = linspace_step(0.01, 0.99, 0.01);
  ASSERT_EQ(v.size(), 99u);
  EXPECT_EQ(v[9], 0.1);
  EXPECT_EQ(v[29], 0.3);
  EXPECT_EQ(v.back(), 0.99);
}
