#pragma once

// Command-line surface: run configuration, argument and config-file parsing,
// table output, and the subcommand drivers behind tools/stratfx.
//
// Config files are flat key=value lines whose keys are the long flag names
// without the leading dashes. Flags given on the command line override the
// file.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "stratfx/design.hpp"
#include "stratfx/dgp.hpp"
#include "stratfx/error.hpp"
#include "stratfx/estimators.hpp"
#include "stratfx/inference.hpp"
#include "stratfx/kernel.hpp"
#include "stratfx/sample.hpp"
#include "stratfx/scope.hpp"

namespace stratfx::cli {

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"estimate", "ci", "scope", "design", "simulate"};
  return names;
}

struct RunConfig {
  std::string command;

  // Data source: a CSV file or a synthetic population (spec non-empty).
  std::string input;
  std::string spec;  // "", "A" or "B"
  std::string outcome_variant = "baseline";
  std::string sampling = "pure";
  double a = 0.5;
  double t = 3.0;
  double p_w = 0.2;
  double q1 = 0.5;
  double q_w = 0.5;
  std::size_t n = 500;

  // CSV schema
  std::string outcome = "y";
  std::string treat = "d";
  std::string stratum;
  std::string cont;  // comma list
  std::string disc;

  // Shares
  std::string p;            // scalar p1 or "d@label=value,..."
  std::string p0;
  std::string grid = "0.01:0.99:0.01";
  std::string composition;  // "label=weight,..."; empty: sample stratum frequencies

  // Smoothing
  std::optional<double> bandwidth;
  std::optional<double> delta;
  std::string kernel = "quartic";
  std::string trim_basis = "design";
  bool leave_one_out = false;

  // Inference and scope
  std::string kind = "ate";
  double alpha = 0.05;
  bool se = false;
  bool pure = false;
  double eta = 0.05;
  double beta = 0.01;
  std::size_t B = 200;
  bool bonferroni = true;
  bool reuse_draws = false;
  std::string eta_sweep;  // lo:hi:step

  // Simulation
  std::string study = "size";
  std::size_t reps = 2000;
  std::size_t sims = 200;
  std::size_t truth_reps = 50000;
  std::string p1_values = "0.05,0.1,0.3,0.5";

  std::optional<std::uint64_t> seed;
  std::string out;  // output directory; stdout when empty
  int verbosity = 0;

  bool synthetic() const { return !spec.empty(); }

  void validate() const {
    if (command == "simulate") {
      if (!input.empty())
        fail(ErrorKind::usage, "simulate draws its own samples; --input is not allowed");
    } else if (input.empty() == spec.empty()) {
      fail(ErrorKind::usage, "give exactly one data source: --input FILE or --spec A|B");
    }
    if (!spec.empty() && spec != "A" && spec != "B")
      fail(ErrorKind::usage, "--spec must be A or B");
    if (!(alpha > 0.0 && alpha < 1.0))
      fail(ErrorKind::usage, "--alpha must lie in (0,1)");
    if (!(beta > 0.0 && beta < alpha))
      fail(ErrorKind::usage, "--beta must lie in (0, alpha)");
    if (!(eta >= 0.0))
      fail(ErrorKind::usage, "--eta must be nonnegative");
    if (bandwidth && !(*bandwidth > 0.0))
      fail(ErrorKind::usage, "--bandwidth must be positive");
    if (delta && !(*delta > 0.0))
      fail(ErrorKind::usage, "--delta must be positive");
    if (kind != "ate" && kind != "tet")
      fail(ErrorKind::usage, "--kind must be ate or tet");
    if (trim_basis != "design" && trim_basis != "share")
      fail(ErrorKind::usage, "--trim-basis must be design or share");
    if (n < 2)
      fail(ErrorKind::usage, "--n must be at least 2");
    if (command == "scope" && B < 100)
      fail(ErrorKind::usage, "--B must be at least 100");
    if ((command == "estimate" || command == "design") && p.empty())
      fail(ErrorKind::usage, "--p is required");
    if (command == "scope" && p0.empty())
      fail(ErrorKind::usage, "--p0 is required");
    if (command == "simulate" && study != "id" && study != "size" && study != "mse" && study != "anticonf" &&
        study != "sample")
      fail(ErrorKind::usage, "--study must be id, size, mse, anticonf or sample");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (s.empty())
    return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    out.push_back(stratfx::detail::trim(item));
  return out;
}

inline double to_number(const std::string& s, const std::string& what) {
  const auto v = stratfx::detail::parse_double(stratfx::detail::trim(s));
  if (!v)
    fail(ErrorKind::usage, "cannot parse " + what + " '" + s + "'");
  return *v;
}

inline OutcomeVariant parse_outcome_variant(const std::string& s) {
  if (s == "baseline" || s == "I")
    return OutcomeVariant::baseline;
  if (s == "II")
    return OutcomeVariant::design_ii;
  if (s == "whet")
    return OutcomeVariant::w_heterogeneous;
  fail(ErrorKind::usage, "--design must be baseline, II or whet");
}

} // namespace detail

// p1 values from "lo:hi:step" or a comma list.
inline std::vector<double> parse_p1_values(const std::string& s) {
  const auto parts = detail::split_list(s, ':');
  if (parts.size() == 3)
    return linspace_step(detail::to_number(parts[0], "grid"), detail::to_number(parts[1], "grid"),
                         detail::to_number(parts[2], "grid"));
  std::vector<double> out;
  for (const auto& item : detail::split_list(s))
    out.push_back(detail::to_number(item, "grid value"));
  if (out.empty())
    fail(ErrorKind::usage, "empty grid '" + s + "'");
  return out;
}

inline Composition parse_composition(const std::string& s, const StratifiedSample& sample) {
  Composition comp;
  comp.strata = sample.strata();
  comp.weights.assign(comp.strata.size(), 0.0);
  if (s.empty()) {
    for (std::size_t w = 0; w < comp.strata.size(); ++w)
      comp.weights[w] = static_cast<double>(sample.n_dw(0, w) + sample.n_dw(1, w)) / static_cast<double>(sample.n());
    return comp;
  }
  std::vector<int> seen(comp.strata.size(), 0);
  for (const auto& item : detail::split_list(s)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::usage, "composition entries look like label=weight, got '" + item + "'");
    const std::string label = stratfx::detail::trim(item.substr(0, eq));
    const auto it = std::find(comp.strata.begin(), comp.strata.end(), label);
    if (it == comp.strata.end())
      fail(ErrorKind::usage, "composition names unknown stratum '" + label + "'");
    const auto w = static_cast<std::size_t>(it - comp.strata.begin());
    comp.weights[w] = detail::to_number(item.substr(eq + 1), "composition weight");
    seen[w] = 1;
  }
  for (std::size_t w = 0; w < seen.size(); ++w)
    if (!seen[w])
      fail(ErrorKind::usage, "composition is missing stratum '" + comp.strata[w] + "'");
  return comp;
}

// Either a scalar p1 (expanded with the composition) or explicit cells
// "1@label=0.1,0@label=0.4,...".
inline ShareVector parse_share_vector(const std::string& s, const Composition& comp) {
  if (s.find('@') == std::string::npos)
    return comp.at(detail::to_number(s, "share"));
  RawShares raw;
  for (const auto& item : detail::split_list(s)) {
    const auto at = item.find('@');
    const auto eq = item.find('=');
    if (at == std::string::npos || eq == std::string::npos || eq < at)
      fail(ErrorKind::usage, "share entries look like d@label=value, got '" + item + "'");
    const std::string d = stratfx::detail::trim(item.substr(0, at));
    if (d != "0" && d != "1")
      fail(ErrorKind::usage, "treatment index must be 0 or 1 in '" + item + "'");
    const std::string label = stratfx::detail::trim(item.substr(at + 1, eq - at - 1));
    if (!raw.emplace(std::pair{d == "1" ? 1 : 0, label}, detail::to_number(item.substr(eq + 1), "share")).second)
      fail(ErrorKind::duplicate, "share for " + d + "@" + label + " given twice");
  }
  return validate_share_vector(raw, comp.strata);
}

// ---------------------------------------------------------------------------
// Parsing

class Parser {
public:
  Parser() : app_("Treatment effects under treatment-based sampling with unknown population shares", "stratfx") {
    app_.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app_.require_subcommand(1);
    for (const auto& name : commands())
      add_command(name);
  }

  CLI::App& app() noexcept { return app_; }

  // args excludes the program name. Throws CLI::ParseError for grammar
  // problems and Error(usage) for out-of-range values.
  RunConfig parse(std::vector<std::string> args) {
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    cfg_ = RunConfig{};
    app_.parse(args);
    for (auto* sub : app_.get_subcommands())
      cfg_.command = sub->get_name();
    if (seed_set_)
      cfg_.seed = seed_value_;
    if (bandwidth_set_)
      cfg_.bandwidth = bandwidth_value_;
    if (delta_set_)
      cfg_.delta = delta_value_;
    cfg_.validate();
    return cfg_;
  }

  RunConfig parse(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return parse(std::move(args));
  }

private:
  CLI::App app_;
  RunConfig cfg_;
  std::uint64_t seed_value_ = 0;
  double bandwidth_value_ = 0.0;
  double delta_value_ = 0.0;
  bool seed_set_ = false;
  bool bandwidth_set_ = false;
  bool delta_set_ = false;

  // Splices "--config FILE" entries in front of the command-line flags so the
  // explicit flags, which come later, win.
  static std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::vector<std::string> from_file, rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config") {
        if (i + 1 >= args.size())
          throw CLI::ArgumentMismatch("--config needs a file");
        path = args[++i];
      } else if (args[i].rfind("--config=", 0) == 0) {
        path = args[i].substr(9);
      } else {
        rest.push_back(args[i]);
        continue;
      }
      std::ifstream in(path);
      if (!in)
        fail(ErrorKind::io, "cannot open config '" + path + "'");
      for (const auto& item : CLI::ConfigINI().from_config(in)) {
        if (item.name == "++" || item.name == "--")
          continue;
        std::string value;
        for (std::size_t k = 0; k < item.inputs.size(); ++k)
          value += (k ? "," : "") + item.inputs[k];
        from_file.push_back("--" + item.name + "=" + value);
      }
    }
    if (from_file.empty())
      return rest;
    // The subcommand name must stay in front.
    auto pos = std::find_if(rest.begin(), rest.end(), [](const std::string& a) {
      return std::find(commands().begin(), commands().end(), a) != commands().end();
    });
    if (pos == rest.end())
      throw CLI::RequiredError("a subcommand");
    ++pos;
    rest.insert(pos, from_file.begin(), from_file.end());
    return rest;
  }

  void add_command(const std::string& name) {
    static const std::map<std::string, std::string> about{
        {"estimate", "point estimate of the ATE or TET at a share vector"},
        {"ci", "pointwise intervals and the robust confidence set over a share grid"},
        {"scope", "anti-confidence set for the scope of external eta-validity"},
        {"design", "optimal design shares and variance bounds"},
        {"simulate", "Monte Carlo studies on the synthetic populations"},
    };
    auto* sub = app_.add_subcommand(name, about.at(name));
    auto& c = cfg_;

    sub->add_option("--spec", c.spec, "synthetic population A or B (instead of --input)");
    sub->add_option("--design", c.outcome_variant, "outcome variant: baseline, II or whet");
    sub->add_option("--sampling", c.sampling, "pure or nonpure")->check(CLI::IsMember({"pure", "nonpure"}));
    sub->add_option("--a", c.a, "participation index slope");
    sub->add_option("--t", c.t, "treatment heterogeneity");
    sub->add_option("--p-w", c.p_w, "population share of W = 1");
    sub->add_option("--q1", c.q1, "design share of treated");
    sub->add_option("--qw", c.q_w, "design share of W = 1");
    sub->add_option("--n", c.n, "sample size");
    sub->add_option("--seed", seed_value_, "random seed (logged when absent)")->each([this](const std::string&) {
      seed_set_ = true;
    });
    sub->add_option("--out", c.out, "output directory (stdout when absent)");
    sub->add_flag("-v,--verbose", c.verbosity, "more log output");
    sub->add_option("--bandwidth", bandwidth_value_, "kernel bandwidth h")->each([this](const std::string&) {
      bandwidth_set_ = true;
    });
    sub->add_option("--delta", delta_value_, "trimming threshold delta_n")->each([this](const std::string&) {
      delta_set_ = true;
    });
    sub->add_option("--kernel", c.kernel, "kernel family");
    sub->add_option("--trim-basis", c.trim_basis, "design or share");
    sub->add_flag("--leave-one-out", c.leave_one_out, "drop each row's own kernel mass");

    if (name != "simulate") {
      sub->add_option("--input", c.input, "CSV file");
      sub->add_option("--outcome", c.outcome, "outcome column");
      sub->add_option("--treat", c.treat, "treatment column");
      sub->add_option("--stratum", c.stratum, "stratum column (omit for pure TBS)");
      sub->add_option("--cont", c.cont, "continuous covariate columns, comma separated");
      sub->add_option("--disc", c.disc, "discrete covariate columns, comma separated");
      sub->add_option("--composition", c.composition, "within-stratum weights label=w,...");
    }
    if (name != "scope" && name != "simulate")
      sub->add_option("--kind", c.kind, "ate or tet");
    if (name == "estimate" || name == "design")
      sub->add_option("--p", c.p, "share vector: p1 or d@label=value,...");
    if (name == "estimate") {
      sub->add_flag("--se", c.se, "also report the standard error");
      sub->add_flag("--pure", c.pure, "pure-TBS matching form for tet");
    }
    if (name == "ci" || name == "scope") {
      sub->add_option("--grid", c.grid, "p1 grid lo:hi:step or comma list");
      sub->add_option("--alpha", c.alpha, "level");
    }
    if (name == "scope" || name == "simulate") {
      sub->add_option("--p0", c.p0, "benchmark share");
      sub->add_option("--eta", c.eta, "relative tolerance");
      sub->add_option("--beta", c.beta, "Bonferroni pre-step level");
      sub->add_option("--B", c.B, "bootstrap replications");
      sub->add_flag("--bonferroni,!--no-bonferroni", c.bonferroni, "Bonferroni pre-step (default on)");
      sub->add_flag("--reuse-draws", c.reuse_draws, "reuse the first step's bootstrap draws");
    }
    if (name == "scope")
      sub->add_option("--eta-sweep", c.eta_sweep, "eta lo:hi:step for bound curves");
    if (name == "simulate") {
      sub->add_option("--study", c.study, "id, size, mse, anticonf or sample");
      sub->add_option("--reps", c.reps, "replications");
      sub->add_option("--sims", c.sims, "anti-confidence simulations");
      sub->add_option("--truth-reps", c.truth_reps, "population draws for the truth");
      sub->add_option("--p1", c.p1_values, "p1 values (comma list or lo:hi:step)");
      sub->add_option("--grid", c.grid, "p1 grid for id and anticonf");
      sub->add_option("--alpha", c.alpha, "level");
    }
  }
};

inline RunConfig parse_cli(int argc, const char* const* argv) {
  Parser parser;
  return parser.parse(argc, argv);
}

// Flat key=value text; parse(serialize(c)) reproduces c.
inline std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  auto num = [](double v) { return stratfx::detail::format_shortest(v); };
  auto str = [](const std::string& s) { return "\"" + s + "\""; };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  os << "# stratfx " << c.command << '\n';
  if (c.command != "simulate") {
    if (!c.input.empty())
      os << "input=" << str(c.input) << '\n';
    os << "outcome=" << str(c.outcome) << '\n';
    os << "treat=" << str(c.treat) << '\n';
    if (!c.stratum.empty())
      os << "stratum=" << str(c.stratum) << '\n';
    if (!c.cont.empty())
      os << "cont=" << str(c.cont) << '\n';
    if (!c.disc.empty())
      os << "disc=" << str(c.disc) << '\n';
    if (!c.composition.empty())
      os << "composition=" << str(c.composition) << '\n';
  }
  if (!c.spec.empty())
    os << "spec=" << c.spec << '\n';
  os << "design=" << c.outcome_variant << '\n';
  os << "sampling=" << c.sampling << '\n';
  os << "a=" << num(c.a) << '\n';
  os << "t=" << num(c.t) << '\n';
  os << "p-w=" << num(c.p_w) << '\n';
  os << "q1=" << num(c.q1) << '\n';
  os << "qw=" << num(c.q_w) << '\n';
  os << "n=" << c.n << '\n';
  if (c.bandwidth)
    os << "bandwidth=" << num(*c.bandwidth) << '\n';
  if (c.delta)
    os << "delta=" << num(*c.delta) << '\n';
  os << "kernel=" << c.kernel << '\n';
  os << "trim-basis=" << c.trim_basis << '\n';
  os << "leave-one-out=" << flag(c.leave_one_out) << '\n';
  if (c.command != "scope" && c.command != "simulate")
    os << "kind=" << c.kind << '\n';
  if (c.command == "estimate" || c.command == "design")
    os << "p=" << str(c.p) << '\n';
  if (c.command == "estimate") {
    os << "se=" << flag(c.se) << '\n';
    os << "pure=" << flag(c.pure) << '\n';
  }
  if (c.command == "ci" || c.command == "scope" || c.command == "simulate") {
    os << "grid=" << str(c.grid) << '\n';
    os << "alpha=" << num(c.alpha) << '\n';
  }
  if (c.command == "scope" || c.command == "simulate") {
    if (!c.p0.empty())
      os << "p0=" << str(c.p0) << '\n';
    os << "eta=" << num(c.eta) << '\n';
    os << "beta=" << num(c.beta) << '\n';
    os << "B=" << c.B << '\n';
    os << "bonferroni=" << flag(c.bonferroni) << '\n';
    os << "reuse-draws=" << flag(c.reuse_draws) << '\n';
  }
  if (c.command == "scope" && !c.eta_sweep.empty())
    os << "eta-sweep=" << str(c.eta_sweep) << '\n';
  if (c.command == "simulate") {
    os << "study=" << c.study << '\n';
    os << "reps=" << c.reps << '\n';
    os << "sims=" << c.sims << '\n';
    os << "truth-reps=" << c.truth_reps << '\n';
    os << "p1=" << str(c.p1_values) << '\n';
  }
  if (c.seed)
    os << "seed=" << *c.seed << '\n';
  if (!c.out.empty())
    os << "out=" << str(c.out) << '\n';
  if (c.verbosity > 0)
    os << "verbose=" << c.verbosity << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tables

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct Report {
  std::vector<Table> tables;
};

inline std::string sig6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline void write_table(std::ostream& out, const Table& table) {
  for (std::size_t k = 0; k < table.header.size(); ++k)
    out << (k ? "," : "") << table.header[k];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k)
      out << (k ? "," : "") << row[k];
    out << '\n';
  }
}

inline void emit_table(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorKind::io, "cannot write '" + path + "'");
  write_table(out, table);
  out.flush();
  if (!out)
    fail(ErrorKind::io, "write to '" + path + "' failed");
}

// One file per table under dir, or every table on out separated by
// "# name" lines.
inline void emit_report(const Report& report, const std::string& dir, std::ostream& out) {
  if (dir.empty()) {
    for (std::size_t k = 0; k < report.tables.size(); ++k) {
      if (report.tables.size() > 1)
        out << (k ? "\n" : "") << "# " << report.tables[k].name << '\n';
      write_table(out, report.tables[k]);
    }
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    fail(ErrorKind::io, "cannot create directory '" + dir + "': " + ec.message());
  for (const auto& t : report.tables)
    emit_table(t, (std::filesystem::path(dir) / (t.name + ".csv")).string());
}

// ---------------------------------------------------------------------------
// Drivers

inline DgpSpec dgp_from(const RunConfig& c) {
  DgpSpec s;
  s.covariates = c.spec == "B" ? CovariateSpec::B : CovariateSpec::A;
  s.outcome = detail::parse_outcome_variant(c.outcome_variant);
  s.sampling = c.sampling == "nonpure" ? Sampling::nonpure : Sampling::pure;
  s.a = c.a;
  s.t = c.t;
  s.p_w = c.p_w;
  s.q1 = c.q1;
  s.q_w = c.q_w;
  s.n = c.n;
  s.seed = c.seed.value_or(0);
  s.validate();
  return s;
}

inline Schema schema_from(const RunConfig& c) {
  return {c.outcome, c.treat, c.stratum, detail::split_list(c.cont), detail::split_list(c.disc)};
}

inline StratifiedSample load_input(const RunConfig& c) {
  if (c.synthetic())
    return draw_tbs_sample(dgp_from(c));
  return load_sample(c.input, schema_from(c));
}

inline SmoothingOptions smoothing_from(const RunConfig& c, const StratifiedSample& sample) {
  auto o = SmoothingOptions::defaults(sample);
  o.kernel = KernelSpec(parse_kernel_family(c.kernel), sample.d1());
  if (c.bandwidth)
    o.h = *c.bandwidth;
  if (c.delta)
    o.delta_n = *c.delta;
  o.trim_basis = c.trim_basis == "share" ? TrimBasis::share : TrimBasis::design;
  o.leave_one_out = c.leave_one_out;
  o.validate();
  return o;
}

inline std::string share_label(const ShareVector& p) { return sig6(p.p1()); }

inline Report run_estimate(const RunConfig& c, const StratifiedSample& sample, const SmoothingOptions& opts) {
  const auto comp = parse_composition(c.composition, sample);
  const auto p = parse_share_vector(c.p, comp);
  const EffectKind kind = parse_effect_kind(c.kind);
  const KernelCache cache(sample, opts);
  Table t{"estimate", {"kind", "p1", "estimate", "n_used"}, {}};
  if (c.se)
    t.header.insert(t.header.begin() + 3, "se");
  if (c.pure && !sample.pure())
    fail(ErrorKind::validation, "--pure given but the sample has several strata");
  const EffectEstimate est =
      c.pure && kind == EffectKind::tet ? estimate_tet_pure(sample, opts) : estimate(cache, p, kind);
  std::vector<std::string> row{to_string(kind), share_label(p), sig6(est.value)};
  if (c.se)
    row.push_back(sig6(summarize(cache, p, kind).se));
  row.push_back(std::to_string(est.n_used));
  t.rows.push_back(row);
  return {{t}};
}

inline Report run_ci(const RunConfig& c, const StratifiedSample& sample, const SmoothingOptions& opts,
                     std::ostream& log) {
  const auto comp = parse_composition(c.composition, sample);
  const auto grid = make_share_grid(parse_p1_values(c.grid), comp);
  const KernelCache cache(sample, opts);
  const auto cs = robust_confidence_set(cache, grid, c.alpha, parse_effect_kind(c.kind));
  Table t{"ci", {"p1", "tau_hat", "se", "lower", "upper"}, {}};
  for (std::size_t i = 0; i < grid.size(); ++i)
    t.rows.push_back({sig6(grid.p1_values()[i]), sig6(cs.points[i].tau), sig6(cs.points[i].se),
                      sig6(cs.per_point[i].lower), sig6(cs.per_point[i].upper)});
  t.rows.push_back({"hull", "", "", sig6(cs.hull.lower), sig6(cs.hull.upper)});
  if (cs.disconnected())
    log << "warning: the confidence set has " << cs.components.size()
        << " disconnected pieces; the hull over-covers\n";
  Report r{{t}};
  if (cs.disconnected()) {
    Table parts{"ci_components", {"lower", "upper"}, {}};
    for (const auto& iv : cs.components)
      parts.rows.push_back({sig6(iv.lower), sig6(iv.upper)});
    r.tables.push_back(parts);
  }
  return r;
}

inline ScopeConfig scope_config_from(const RunConfig& c, const ShareVector& p0) {
  ScopeConfig s;
  s.p0 = p0;
  s.eta = c.eta;
  s.alpha = c.alpha;
  s.beta = c.beta;
  s.B = c.B;
  s.seed = c.seed.value_or(0);
  s.bonferroni = c.bonferroni;
  s.reuse_draws = c.reuse_draws;
  return s;
}

inline Report run_scope(const RunConfig& c, const StratifiedSample& sample, const SmoothingOptions& opts) {
  const auto comp = parse_composition(c.composition, sample);
  const auto grid = make_share_grid(parse_p1_values(c.grid), comp);
  const auto scfg = scope_config_from(c, parse_share_vector(c.p0, comp));
  const KernelCache cache(sample, opts);
  ScopeEngine engine(cache, grid, scfg.p0);
  const auto res = step_down(engine, scfg);

  Table points{"scope", {"p1", "tau_hat", "q_stat", "estimated_scope", "retained", "removed"}, {}};
  for (std::size_t i = 0; i < res.grid.size(); ++i)
    points.rows.push_back({sig6(res.grid.p1_values()[i]), sig6(res.tau[i]), sig6(res.q[i]),
                           std::to_string(res.estimated_scope[i]), std::to_string(res.retained[i]),
                           std::to_string(1 - res.retained[i])});
  Table steps{"scope_steps", {"step", "active", "critical", "sup_q", "eta_hat", "redraws"}, {}};
  for (std::size_t k = 0; k < res.steps.size(); ++k) {
    const auto& s = res.steps[k];
    steps.rows.push_back({std::to_string(k + 1), std::to_string(s.active), sig6(s.critical), sig6(s.sup_q),
                          sig6(s.eta_hat), std::to_string(s.redraws)});
  }
  Report r{{points, steps}};
  if (!c.eta_sweep.empty()) {
    Table sweep{"eta_sweep", {"eta", "lower", "upper", "retained"}, {}};
    for (const auto& row : eta_sweep(engine, scfg, parse_p1_values(c.eta_sweep)))
      sweep.rows.push_back({sig6(row.eta), sig6(row.lower), sig6(row.upper), std::to_string(row.retained)});
    r.tables.push_back(sweep);
  }
  return r;
}

inline Report run_design(const RunConfig& c, const StratifiedSample& sample, const SmoothingOptions& opts) {
  const auto comp = parse_composition(c.composition, sample);
  const auto p = parse_share_vector(c.p, comp);
  const auto rec = recommend_design(KernelCache(sample, opts), p, parse_effect_kind(c.kind));
  Table cells{"design", {"d", "stratum", "J", "q_star", "q_hat"}, {}};
  for (std::size_t w = 0; w < rec.noise.strata.size(); ++w)
    for (int d = 1; d >= 0; --d) {
      const auto k = cell_index(d, w);
      cells.rows.push_back({std::to_string(d), rec.noise.strata[w], sig6(rec.noise.j[k]), sig6(rec.q_star[k]),
                            sig6(rec.q_hat[k])});
    }
  Table summary{"design_summary", {"quantity", "value"}, {}};
  summary.rows.push_back({"min_bound", sig6(rec.min_bound)});
  summary.rows.push_back({"realized_bound", sig6(rec.realized_bound)});
  summary.rows.push_back({"efficiency_ratio", sig6(rec.realized_bound / rec.min_bound)});
  if (rec.improving_range) {
    summary.rows.push_back({"improving_lower", sig6(rec.improving_range->lower)});
    summary.rows.push_back({"improving_upper", sig6(rec.improving_range->upper)});
  }
  return {{cells, summary}};
}

inline Report run_simulate(const RunConfig& c) {
  DgpSpec spec = dgp_from(c);
  const std::uint64_t seed = c.seed.value_or(0);
  if (c.study == "sample") {
    const auto sample = draw_tbs_sample(spec);
    const auto schema = default_schema(sample);
    Table t{"sample", {"y", "d", "w"}, {}};
    for (const auto& name : schema.cont)
      t.header.push_back(name);
    for (const auto& name : schema.disc)
      t.header.push_back(name);
    for (const auto& row : sample.rows()) {
      std::vector<std::string> cells{stratfx::detail::format_shortest(row.y), std::to_string(row.d),
                                     sample.strata()[row.w]};
      for (double x : row.v1)
        cells.push_back(stratfx::detail::format_shortest(x));
      for (long x : row.v2)
        cells.push_back(std::to_string(x));
      t.rows.push_back(std::move(cells));
    }
    return {{t}};
  }
  if (c.study == "id") {
    const auto res = mc_identified_interval(spec, parse_p1_values(c.grid), c.truth_reps);
    Table summary{"identified_interval", {"spec", "a", "t", "lower", "upper", "rl_percent"}, {}};
    summary.rows.push_back({c.spec.empty() ? "A" : c.spec, sig6(spec.a), sig6(spec.t), sig6(res.interval.lower),
                            sig6(res.interval.upper), sig6(res.rl_percent)});
    Table curve{"identified_curve", {"p1", "tau_ate"}, {}};
    for (std::size_t i = 0; i < res.p1.size(); ++i)
      curve.rows.push_back({sig6(res.p1[i]), sig6(res.tau[i])});
    return {{summary, curve}};
  }
  if (c.study == "size" || c.study == "mse") {
    const auto rep = mc_test_size(spec, parse_p1_values(c.p1_values), c.reps, c.alpha);
    if (c.study == "size") {
      Table t{"size", {"p1", "ate", "tet", "reps"}, {}};
      for (std::size_t k = 0; k + 1 < rep.cells.size(); k += 2)
        t.rows.push_back({sig6(rep.cells[k].p1), sig6(rep.cells[k].rejection_rate()),
                          sig6(rep.cells[k + 1].rejection_rate()), std::to_string(rep.cells[k].reps)});
      return {{t}};
    }
    Table t{"mse", {"p1", "kind", "truth", "bias", "mad", "mse", "reps"}, {}};
    for (const auto& cell : rep.cells)
      t.rows.push_back({sig6(cell.p1), to_string(cell.kind), sig6(cell.truth), sig6(cell.bias()), sig6(cell.mad()),
                        sig6(cell.mse()), std::to_string(cell.reps)});
    return {{t}};
  }
  // anticonf
  if (c.p0.empty())
    fail(ErrorKind::usage, "--p0 is required for the anticonf study");
  const auto p0 = spec.shares(detail::to_number(c.p0, "p0"));
  ScopeConfig scfg = scope_config_from(c, p0);
  scfg.seed = derive_key(seed, {0x5C0E});
  const auto res = mc_anti_confidence(spec, scfg, parse_p1_values(c.grid), c.sims);
  Table t{"anticonf",
          {"p0", "eta", "n", "mean_lower", "mean_upper", "fwer", "singleton_rate", "true_lower", "true_upper", "sims"},
          {}};
  t.rows.push_back({sig6(p0.p1()), sig6(c.eta), std::to_string(spec.n), sig6(res.mean_lower), sig6(res.mean_upper),
                    sig6(res.fwer), sig6(res.singleton_rate), sig6(res.true_scope.lower),
                    sig6(res.true_scope.upper), std::to_string(res.sims)});
  return {{t}};
}

// Fills in a logged seed when none was given.
inline RunConfig resolve_seed(RunConfig c, std::ostream& log) {
  if (!c.seed) {
    std::random_device rd;
    c.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    log << "seed=" << *c.seed << " (pass --seed to replay)\n";
  }
  return c;
}

inline Report run(const RunConfig& config, std::ostream& log) {
  const bool random = config.command == "scope" || config.command == "simulate" || config.synthetic();
  const RunConfig c = random ? resolve_seed(config, log) : config;
  if (c.verbosity > 0)
    log << serialize(c);
  if (c.command == "simulate")
    return run_simulate(c);
  const auto sample = load_input(c);
  const auto opts = smoothing_from(c, sample);
  if (c.verbosity > 0)
    log << "n=" << sample.n() << " strata=" << sample.num_strata() << " h=" << opts.h << " delta=" << opts.delta_n
        << '\n';
  if (c.command == "estimate")
    return run_estimate(c, sample, opts);
  if (c.command == "ci")
    return run_ci(c, sample, opts, log);
  if (c.command == "scope")
    return run_scope(c, sample, opts);
  return run_design(c, sample, opts);
}

// Full entry point; returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Parser parser;
  RunConfig config;
  try {
    config = parser.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = parser.app().exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  }
  try {
    emit_report(run(config, err), config.out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

} // namespace stratfx::cli
