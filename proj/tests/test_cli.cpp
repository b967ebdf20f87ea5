#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "fixtures.hpp"
#include "stratfx/cli.hpp"

using namespace stratfx;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("stratfx_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    data_ = (dir_ / "data.csv").string();
    save_sample(data_, fixtures::discrete(3, 2000, 2));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static cli::RunConfig parse(std::vector<std::string> args) {
    cli::Parser parser;
    return parser.parse(std::move(args));
  }

  static int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
    args.insert(args.begin(), "stratfx");
    std::vector<const char*> argv;
    for (const auto& a : args)
      argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), o, e);
    if (out)
      *out = o.str();
    if (err)
      *err = e.str();
    return code;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::string data_;
};

} // namespace

TEST_F(CliTest, ScopeDefaults) {
  const auto c = parse({"scope", "--input", data_, "--eta", "0.05", "--p0", "0.05"});
  EXPECT_EQ(c.command, "scope");
  EXPECT_EQ(c.eta, 0.05);
  EXPECT_EQ(c.alpha, 0.05);
  EXPECT_EQ(c.beta, 0.01);
  EXPECT_EQ(c.B, 200u);
  EXPECT_TRUE(c.bonferroni);
  EXPECT_FALSE(c.seed.has_value());
  EXPECT_FALSE(c.bandwidth.has_value());
  EXPECT_FALSE(c.delta.has_value());
}

TEST_F(CliTest, RangeErrors) {
  EXPECT_THROW(parse({"scope", "--input", data_, "--p0", "0.1", "--alpha", "1.5"}), Error);
  EXPECT_THROW(parse({"ci", "--input", data_, "--bandwidth", "-1"}), Error);
  EXPECT_THROW(parse({"ci", "--input", data_, "--spec", "A"}), Error);
  EXPECT_THROW(parse({"ci"}), Error);
  EXPECT_THROW(parse({"estimate", "--input", data_}), Error);
  EXPECT_THROW(parse({"ci", "--input", data_, "--bogus", "1"}), CLI::ParseError);
  EXPECT_THROW(parse({}), CLI::ParseError);
}

TEST_F(CliTest, ConfigFileAndFlagOverride) {
  const auto cfg = path("run.cfg");
  std::ofstream(cfg) << "# comment\ninput=\"" << data_ << "\"\nstratum=w\ndisc=\"v2_1,v2_2\"\neta=0.2\np0=0.1\nB=300\n";
  const auto a = parse({"scope", "--config", cfg});
  EXPECT_EQ(a.eta, 0.2);
  EXPECT_EQ(a.B, 300u);
  EXPECT_EQ(a.disc, "v2_1,v2_2");
  const auto b = parse({"scope", "--config", cfg, "--eta", "0.3", "--disc", "v2_1"});
  EXPECT_EQ(b.eta, 0.3);
  EXPECT_EQ(b.disc, "v2_1");
  EXPECT_EQ(b.B, 300u);
  const auto c = parse({"scope", "--eta", "0.3", "--config", cfg});
  EXPECT_EQ(c.eta, 0.3);
}

TEST_F(CliTest, SerializeRoundTrip) {
  const std::vector<std::vector<std::string>> cases{
      {"scope", "--input", data_, "--stratum", "w", "--p0", "0.1", "--eta", "0.15", "--seed", "9", "--no-bonferroni",
       "--bandwidth", "0.3", "--eta-sweep", "0.05:0.3:0.05", "--leave-one-out"},
      {"estimate", "--spec", "B", "--sampling", "nonpure", "--p", "0.05", "--kind", "tet", "--se", "--delta", "0.01"},
      {"simulate", "--study", "anticonf", "--p0", "0.3", "--design", "II", "--n", "1000", "--sims", "20"},
      {"design", "--input", data_, "--p", "1@s0=0.1,0@s0=0.4,1@s1=0.1,0@s1=0.4", "--composition", "s0=0.5,s1=0.5"},
      {"ci", "--input", data_, "--grid", "0.1,0.2", "--alpha", "0.1", "--cont", "", "-v"},
  };
  for (const auto& args : cases) {
    const auto first = parse(args);
    const auto cfg = path("rt.cfg");
    std::ofstream(cfg) << cli::serialize(first);
    const auto second = parse({first.command, "--config", cfg});
    EXPECT_EQ(cli::serialize(second), cli::serialize(first)) << args.front();
  }
}

TEST_F(CliTest, ShareParsing) {
  const auto s = load_sample(data_, {"y", "d", "w", {}, {"v2_1", "v2_2"}});
  const auto empirical = cli::parse_composition("", s);
  EXPECT_NEAR(empirical.weights[0] + empirical.weights[1], 1.0, 1e-15);
  const auto comp = cli::parse_composition("s0=0.25,s1=0.75", s);
  const auto p = cli::parse_share_vector("0.2", comp);
  EXPECT_NEAR(p(1, 1), 0.15, 1e-15);
  const auto q = cli::parse_share_vector("1@s0=0.1,0@s0=0.4,1@s1=0.2,0@s1=0.3", comp);
  EXPECT_EQ(q(1, 1), 0.2);
  EXPECT_THROW(cli::parse_share_vector("1@s0=0.1,0@s0=0.4", comp), Error);
  EXPECT_THROW(cli::parse_composition("s0=1", s), Error);
  EXPECT_EQ(cli::parse_p1_values("0.1:0.3:0.1"), (std::vector<double>{0.1, 0.2, 0.3}));
}

TEST_F(CliTest, HeaderOnlyTable) {
  const cli::Table t{"empty", {"p1", "tau_hat"}, {}};
  cli::emit_table(t, path("empty.csv"));
  EXPECT_EQ(slurp(path("empty.csv")), "p1,tau_hat\n");
}

TEST_F(CliTest, SixSignificantDigits) {
  EXPECT_EQ(cli::sig6(3.14159265), "3.14159");
  EXPECT_EQ(cli::sig6(0.000123456789), "0.000123457");
  EXPECT_EQ(cli::sig6(1234567.0), "1.23457e+06");
}

TEST_F(CliTest, UnwritablePathIsIoError) {
  try {
    cli::emit_table({"t", {"a"}, {}}, "/nonexistent-dir/x/t.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST_F(CliTest, ExitCodes) {
  const std::vector<std::string> base{"--input", data_, "--stratum", "w", "--disc", "v2_1,v2_2"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
    head.insert(head.end(), base.begin(), base.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  std::string out, err;
  EXPECT_EQ(run(with({"estimate"}, {"--p", "0.1"}), &out), 0);
  EXPECT_NE(out.find("kind,p1,estimate,n_used"), std::string::npos);
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_EQ(run(with({"scope"}, {"--p0", "0.1", "--alpha", "1.5"})), 2);
  EXPECT_EQ(run(with({"estimate"}, {"--p", "0.1", "--frobnicate"})), 2);
  EXPECT_EQ(run(with({"estimate"}, {"--p", "1.1"})), 2);
  EXPECT_EQ(run({"estimate", "--input", path("missing.csv"), "--p", "0.1"}), 3);
  EXPECT_EQ(run(with({"estimate"}, {"--p", "0.1", "--out", "/proc/forbidden"})), 3);
  EXPECT_EQ(run(with({"estimate"}, {"--p", "0.1", "--delta", "100"}), nullptr, &err), 4);
  EXPECT_NE(err.find("trimmed"), std::string::npos);
}

TEST_F(CliTest, SeedIsLoggedAndReplayable) {
  std::string out1, err1, out2;
  ASSERT_EQ(run({"simulate", "--study", "sample", "--n", "50"}, &out1, &err1), 0);
  const auto pos = err1.find("seed=");
  ASSERT_NE(pos, std::string::npos);
  const std::string seed = err1.substr(pos + 5, err1.find(' ', pos) - pos - 5);
  ASSERT_EQ(run({"simulate", "--study", "sample", "--n", "50", "--seed", seed}, &out2), 0);
  EXPECT_EQ(out1, out2);
}

TEST_F(CliTest, RerunIsByteIdentical) {
  const std::vector<std::string> args{"scope", "--input", data_, "--stratum", "w", "--disc", "v2_1,v2_2",
                                      "--p0", "0.2", "--eta", "0.2", "--seed", "5", "--grid", "0.05:0.95:0.05",
                                      "--B", "100"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b")});
  ASSERT_EQ(run(a), 0);
  ASSERT_EQ(run(b), 0);
  for (const auto* name : {"scope.csv", "scope_steps.csv"}) {
    const auto x = slurp(path("a") + "/" + name);
    EXPECT_FALSE(x.empty());
    EXPECT_EQ(x, slurp(path("b") + "/" + name));
  }
}

// Bound curves from an eta sweep widen as eta grows.
TEST_F(CliTest, EtaSweepBoundsAreMonotone) {
  std::string out;
  ASSERT_EQ(run({"scope", "--spec", "A", "--design", "II", "--t", "0.5", "--n", "1000", "--seed", "17", "--p0", "0.3",
                 "--eta-sweep", "0.02:0.3:0.02", "--grid", "0.01:0.99:0.02", "--out", path("sweep")}),
            0);
  std::ifstream in(path("sweep") + "/eta_sweep.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "eta,lower,upper,retained");
  double prev_lo = 1.0, prev_hi = 0.0;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string eta, lo, hi;
    std::getline(ss, eta, ',');
    std::getline(ss, lo, ',');
    std::getline(ss, hi, ',');
    EXPECT_LE(std::stod(lo), prev_lo + 1e-12) << line;
    EXPECT_GE(std::stod(hi), prev_hi - 1e-12) << line;
    prev_lo = std::stod(lo);
    prev_hi = std::stod(hi);
    ++rows;
  }
  EXPECT_EQ(rows, 15);
}
