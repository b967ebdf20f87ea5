#pragma once

// Observation model for treatment-based (stratified) samples, population
// share vectors, share grids, and CSV ingestion.
//
// Strata are indexed by (d, w) with d in {0,1} and w a dense code into the
// sorted list of stratum labels. The flat cell index is 2 * w + d.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "stratfx/error.hpp"

namespace stratfx {

inline constexpr std::size_t cell_index(int d, std::size_t w) { return 2 * w + static_cast<std::size_t>(d); }

inline std::string stratum_name(int d, const std::string& label) {
  return "(d=" + std::to_string(d) + ", w=" + label + ")";
}

struct Observation {
  double y = 0.0;
  std::vector<double> v1;  // continuous covariates
  std::vector<long> v2;    // discrete covariates
  int d = 0;               // treatment status
  std::size_t w = 0;       // stratum code

  friend bool operator==(const Observation&, const Observation&) = default;
};

class StratifiedSample {
public:
  StratifiedSample() = default;

  StratifiedSample(std::vector<Observation> rows, std::vector<std::string> strata)
      : rows_(std::move(rows)), strata_(std::move(strata)) {
    if (rows_.empty())
      fail(ErrorKind::empty_input, "sample has no rows");
    if (strata_.empty())
      fail(ErrorKind::validation, "sample needs at least one stratum label");
    d1_ = rows_.front().v1.size();
    d2_ = rows_.front().v2.size();
    index_.assign(2 * strata_.size(), {});
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto& r = rows_[i];
      const std::string where = "row " + std::to_string(i + 1);
      if (r.d != 0 && r.d != 1)
        fail(ErrorKind::validation, where + ": treatment must be 0 or 1");
      if (r.w >= strata_.size())
        fail(ErrorKind::validation, where + ": undeclared stratum code");
      if (r.v1.size() != d1_ || r.v2.size() != d2_)
        fail(ErrorKind::validation, where + ": covariate dimension mismatch");
      if (!std::isfinite(r.y))
        fail(ErrorKind::validation, where + ": outcome is not finite");
      for (double x : r.v1)
        if (!std::isfinite(x))
          fail(ErrorKind::validation, where + ": continuous covariate is not finite");
      index_[cell_index(r.d, r.w)].push_back(i);
    }
  }

  std::size_t n() const noexcept { return rows_.size(); }
  std::size_t num_strata() const noexcept { return strata_.size(); }
  std::size_t d1() const noexcept { return d1_; }
  std::size_t d2() const noexcept { return d2_; }
  bool pure() const noexcept { return strata_.size() == 1; }

  const Observation& row(std::size_t i) const {
    if (i >= rows_.size())
      fail(ErrorKind::index, "row index " + std::to_string(i) + " out of range");
    return rows_[i];
  }
  const std::vector<Observation>& rows() const noexcept { return rows_; }
  const std::vector<std::string>& strata() const noexcept { return strata_; }

  // Row indices of S_{d,w}.
  const std::vector<std::size_t>& stratum_rows(int d, std::size_t w) const { return index_.at(cell_index(d, w)); }
  std::size_t n_dw(int d, std::size_t w) const { return stratum_rows(d, w).size(); }
  double q_hat(int d, std::size_t w) const {
    return static_cast<double>(n_dw(d, w)) / static_cast<double>(n());
  }

  friend bool operator==(const StratifiedSample& a, const StratifiedSample& b) {
    return a.rows_ == b.rows_ && a.strata_ == b.strata_;
  }

private:
  std::vector<Observation> rows_;
  std::vector<std::string> strata_;
  std::size_t d1_ = 0;
  std::size_t d2_ = 0;
  std::vector<std::vector<std::size_t>> index_;
};

// ---------------------------------------------------------------------------
// Share vectors

inline constexpr double kSimplexTolerance = 1e-12;

class ShareVector {
public:
  ShareVector() = default;

  // Cells in flat (2w + d) order. Validates open-simplex membership; never
  // renormalises.
  ShareVector(std::vector<double> cells, std::vector<std::string> strata)
      : cells_(std::move(cells)), strata_(std::move(strata)) {
    if (strata_.empty() || cells_.size() != 2 * strata_.size())
      fail(ErrorKind::simplex, "share vector must cover {0,1} x strata");
    double sum = 0.0;
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      const double v = cells_[k];
      if (!(v > 0.0 && v < 1.0))
        fail(ErrorKind::simplex, "open-simplex violation: share " +
                                     stratum_name(static_cast<int>(k % 2), strata_[k / 2]) + " = " +
                                     std::to_string(v) + " is not in (0,1)");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      std::ostringstream os;
      os.precision(17);
      os << "simplex violation: shares sum to " << sum << " (deficit " << 1.0 - sum << ")";
      fail(ErrorKind::simplex, os.str());
    }
  }

  double operator()(int d, std::size_t w) const { return cells_.at(cell_index(d, w)); }
  double p1() const {
    double s = 0.0;
    for (std::size_t w = 0; w < strata_.size(); ++w)
      s += (*this)(1, w);
    return s;
  }
  std::size_t num_strata() const noexcept { return strata_.size(); }
  const std::vector<std::string>& strata() const noexcept { return strata_; }
  std::span<const double> cells() const noexcept { return cells_; }

  friend bool operator==(const ShareVector&, const ShareVector&) = default;

private:
  std::vector<double> cells_;
  std::vector<std::string> strata_;
};

using RawShares = std::map<std::pair<int, std::string>, double>;

inline ShareVector validate_share_vector(const RawShares& raw, const std::vector<std::string>& strata) {
  std::vector<double> cells(2 * strata.size());
  for (std::size_t w = 0; w < strata.size(); ++w)
    for (int d = 0; d < 2; ++d) {
      auto it = raw.find({d, strata[w]});
      if (it == raw.end())
        fail(ErrorKind::simplex, "missing share for " + stratum_name(d, strata[w]));
      cells[cell_index(d, w)] = it->second;
    }
  if (raw.size() != cells.size())
    fail(ErrorKind::simplex, "share map has entries for undeclared strata");
  return ShareVector(std::move(cells), strata);
}

// Fixed within-stratum composition: p_{1,w} = p1 * weight_w and
// p_{0,w} = (1 - p1) * weight_w. Pure TBS is a single stratum with weight 1.
struct Composition {
  std::vector<std::string> strata;
  std::vector<double> weights;

  static Composition pure(std::string label = "all") { return {{std::move(label)}, {1.0}}; }

  ShareVector at(double p1) const {
    if (strata.size() != weights.size() || strata.empty())
      fail(ErrorKind::usage, "composition needs one weight per stratum");
    std::vector<double> cells(2 * strata.size());
    for (std::size_t w = 0; w < strata.size(); ++w) {
      cells[cell_index(1, w)] = p1 * weights[w];
      cells[cell_index(0, w)] = (1.0 - p1) * weights[w];
    }
    return ShareVector(std::move(cells), strata);
  }
};

class ShareGrid {
public:
  ShareGrid() = default;
  ShareGrid(std::vector<ShareVector> points, std::vector<double> p1_values = {})
      : points_(std::move(points)), p1_(std::move(p1_values)) {
    if (points_.empty())
      fail(ErrorKind::usage, "share grid is empty");
    for (std::size_t i = 0; i < points_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (points_[i] == points_[j])
          fail(ErrorKind::duplicate, "duplicate grid point at positions " + std::to_string(j) + " and " +
                                         std::to_string(i));
    if (p1_.empty())
      for (const auto& p : points_)
        p1_.push_back(p.p1());
  }

  std::size_t size() const noexcept { return points_.size(); }
  const ShareVector& operator[](std::size_t i) const { return points_.at(i); }
  const std::vector<ShareVector>& points() const noexcept { return points_; }
  // Scalar parametrisation (p1 of each point).
  const std::vector<double>& p1_values() const noexcept { return p1_; }

  std::optional<std::size_t> find(const ShareVector& p) const {
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (points_[i] == p)
        return i;
    return std::nullopt;
  }

private:
  std::vector<ShareVector> points_;
  std::vector<double> p1_;
};

inline ShareGrid make_share_grid(const std::vector<double>& p1_values, const Composition& composition) {
  for (std::size_t i = 1; i < p1_values.size(); ++i) {
    if (p1_values[i] == p1_values[i - 1])
      fail(ErrorKind::duplicate, "duplicate p1 value " + std::to_string(p1_values[i]));
    if (p1_values[i] < p1_values[i - 1])
      fail(ErrorKind::usage, "p1 values must be sorted ascending");
  }
  std::vector<ShareVector> points;
  points.reserve(p1_values.size());
  for (double v : p1_values)
    points.push_back(composition.at(v));
  return ShareGrid(std::move(points), p1_values);
}

// Equally spaced values lo, lo+step, ..., snapped to 12 decimals so that
// e.g. 0.01:0.99:0.01 contains exactly the double nearest 0.1.
inline std::vector<double> linspace_step(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo)
    fail(ErrorKind::usage, "range needs lo <= hi and step > 0");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k)
    out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct Schema {
  std::string outcome;
  std::string treat;
  std::string stratum;  // empty: pure TBS, single label "all"
  std::vector<std::string> cont;
  std::vector<std::string> disc;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        field += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty())
    return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

inline std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

} // namespace detail

inline StratifiedSample read_sample(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    fail(ErrorKind::empty_input, "input is empty (header row required)");
  auto header = detail::split_csv_line(line);
  for (auto& h : header)
    h = detail::trim(h);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      fail(ErrorKind::schema, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.outcome.empty() || schema.treat.empty())
    fail(ErrorKind::schema, "schema must name an outcome and a treatment column");
  const std::size_t y_col = column(schema.outcome);
  const std::size_t d_col = column(schema.treat);
  const std::optional<std::size_t> w_col =
      schema.stratum.empty() ? std::nullopt : std::optional<std::size_t>(column(schema.stratum));
  std::vector<std::size_t> cont_cols, disc_cols;
  for (const auto& c : schema.cont)
    cont_cols.push_back(column(c));
  for (const auto& c : schema.disc)
    disc_cols.push_back(column(c));

  struct Raw {
    Observation obs;
    std::string label;
  };
  std::vector<Raw> raw;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty())
      continue;
    ++row_no;
    const std::string where = "row " + std::to_string(row_no);
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::validation, where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
    for (auto& f : fields)
      f = detail::trim(f);
    auto number = [&](std::size_t col) {
      if (fields[col].empty())
        fail(ErrorKind::validation, where + ": missing value in column '" + header[col] + "'");
      auto v = detail::parse_double(fields[col]);
      if (!v || !std::isfinite(*v))
        fail(ErrorKind::validation, where + ": non-numeric value '" + fields[col] + "' in column '" +
                                        header[col] + "'");
      return *v;
    };
    Raw r;
    r.obs.y = number(y_col);
    const double d = number(d_col);
    if (d != 0.0 && d != 1.0)
      fail(ErrorKind::validation, where + ": treatment value '" + fields[d_col] + "' is not binary");
    r.obs.d = static_cast<int>(d);
    for (auto c : cont_cols)
      r.obs.v1.push_back(number(c));
    for (auto c : disc_cols) {
      const double v = number(c);
      if (v != std::floor(v))
        fail(ErrorKind::validation, where + ": discrete covariate '" + header[c] + "' is not an integer");
      r.obs.v2.push_back(static_cast<long>(v));
    }
    if (w_col) {
      r.label = fields[*w_col];
      if (r.label.empty())
        fail(ErrorKind::validation, where + ": missing stratum label");
    } else {
      r.label = "all";
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty())
    fail(ErrorKind::empty_input, "input has a header but no data rows");

  std::vector<std::string> labels;
  for (const auto& r : raw)
    labels.push_back(r.label);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

  std::vector<Observation> rows;
  rows.reserve(raw.size());
  for (auto& r : raw) {
    r.obs.w = static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), r.label) - labels.begin());
    rows.push_back(std::move(r.obs));
  }
  return StratifiedSample(std::move(rows), std::move(labels));
}

inline StratifiedSample load_sample(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::io, "cannot open '" + path + "'");
  return read_sample(in, schema);
}

// Writes columns y, d, w, v1_1.., v2_1.. with shortest round-trip numbers.
inline Schema default_schema(const StratifiedSample& s) {
  Schema schema{"y", "d", "w", {}, {}};
  for (std::size_t k = 0; k < s.d1(); ++k)
    schema.cont.push_back("v1_" + std::to_string(k + 1));
  for (std::size_t k = 0; k < s.d2(); ++k)
    schema.disc.push_back("v2_" + std::to_string(k + 1));
  return schema;
}

inline void write_sample(std::ostream& out, const StratifiedSample& s) {
  const Schema schema = default_schema(s);
  out << "y,d,w";
  for (const auto& c : schema.cont)
    out << ',' << c;
  for (const auto& c : schema.disc)
    out << ',' << c;
  out << '\n';
  for (const auto& r : s.rows()) {
    out << detail::format_shortest(r.y) << ',' << r.d << ',' << s.strata()[r.w];
    for (double x : r.v1)
      out << ',' << detail::format_shortest(x);
    for (long x : r.v2)
      out << ',' << x;
    out << '\n';
  }
}

inline void save_sample(const std::string& path, const StratifiedSample& s) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write '" + path + "'");
  write_sample(out, s);
  if (!out)
    fail(ErrorKind::io, "write to '" + path + "' failed");
}

} // namespace stratfx
