#pragma once

// Product-kernel smoothing: kernel evaluation, rule-of-thumb bandwidth,
// density components lambda-tilde, the propensity estimator, and trimming.
//
// Discrete covariates and the stratum label are matched exactly; only the
// continuous block V1 is smoothed. With no continuous covariates K_h == 1 and
// every quantity reduces to cell counts.

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <map>
#include <memory>
#include <tuple>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stratfx/error.hpp"
#include "stratfx/sample.hpp"

namespace stratfx {

enum class KernelFamily { quartic };

inline double quartic(double u) {
  if (std::abs(u) > 1.0)
    return 0.0;
  const double s = 1.0 - u * u;
  return 0.9375 * s * s;
}

struct KernelSpec {
  KernelFamily family = KernelFamily::quartic;
  std::size_t d1 = 0;

  KernelSpec() = default;
  KernelSpec(KernelFamily f, std::size_t dim) : family(f), d1(dim) {
    // Product kernel: unit mass of the 1-d factor implies unit mass overall.
    constexpr int steps = 20000;
    double mass = 0.0;
    for (int k = 0; k <= steps; ++k) {
      const double u = -1.0 + 2.0 * k / steps;
      mass += (k == 0 || k == steps ? 0.5 : 1.0) * factor(u);
    }
    mass *= 2.0 / steps;
    if (std::abs(mass - 1.0) > 1e-6)
      fail(ErrorKind::domain, "kernel does not integrate to one");
  }

  double factor(double u) const {
    switch (family) {
    case KernelFamily::quartic:
      return quartic(u);
    }
    return 0.0;
  }
};

inline double kernel_eval(const KernelSpec& spec, std::span<const double> u) {
  double k = 1.0;
  for (double x : u) {
    k *= spec.factor(x);
    if (k == 0.0)
      break;
  }
  return k;
}

inline KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "quartic")
    return KernelFamily::quartic;
  fail(ErrorKind::usage, "unknown kernel '" + name + "' (supported: quartic)");
}

// 2.78 * sd * n^{-1/3}; sd uses the n-1 denominator.
inline double rule_of_thumb_bandwidth(const StratifiedSample& sample, std::size_t column) {
  const std::size_t n = sample.n();
  if (n < 2)
    fail(ErrorKind::degenerate, "bandwidth rule needs at least two rows");
  if (column >= sample.d1())
    fail(ErrorKind::index, "continuous covariate index out of range");
  double mean = 0.0;
  for (const auto& r : sample.rows())
    mean += r.v1[column];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const auto& r : sample.rows())
    ss += (r.v1[column] - mean) * (r.v1[column] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0))
    fail(ErrorKind::degenerate, "continuous covariate " + std::to_string(column + 1) + " has zero variance");
  return 2.78 * sd * std::pow(static_cast<double>(n), -1.0 / 3.0);
}

// Shared scalar bandwidth: geometric mean of the per-coordinate rules. With
// no continuous covariates the bandwidth is unused and 1 is returned.
inline double default_bandwidth(const StratifiedSample& sample) {
  if (sample.d1() == 0)
    return 1.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < sample.d1(); ++k)
    log_sum += std::log(rule_of_thumb_bandwidth(sample, k));
  return std::exp(log_sum / static_cast<double>(sample.d1()));
}

// Which share vector the trimming densities are evaluated at. `design`
// evaluates lambda-tilde at p = q-hat so the trimmed set does not move with
// the candidate share; `share` uses the candidate p itself.
enum class TrimBasis { design, share };

struct SmoothingOptions {
  double h = 1.0;
  double delta_n = 0.0;
  KernelSpec kernel;
  TrimBasis trim_basis = TrimBasis::design;
  // Drop the row's own kernel mass from lambda-tilde. Off by default: with
  // discrete covariates the full-sample sums reproduce the cell frequencies
  // exactly, while the leave-one-out sums bias the weights upward.
  bool leave_one_out = false;

  void validate() const {
    if (!(h > 0.0))
      fail(ErrorKind::usage, "bandwidth must be positive");
    if (!(delta_n > 0.0))
      fail(ErrorKind::usage, "trimming threshold must be positive");
  }

  // Bandwidth from the rule of thumb, delta_n = n^{-1/2}.
  static SmoothingOptions defaults(const StratifiedSample& sample) {
    SmoothingOptions o;
    o.kernel = KernelSpec(KernelFamily::quartic, sample.d1());
    o.h = default_bandwidth(sample);
    o.delta_n = 1.0 / std::sqrt(static_cast<double>(sample.n()));
    return o;
  }
};

// K_h(v_j - v_i) = K((v_j - v_i)/h) / h^{d1}.
inline double scaled_kernel(const SmoothingOptions& opts, std::span<const double> a, std::span<const double> b) {
  double k = 1.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    k *= opts.kernel.factor((a[m] - b[m]) / opts.h) / opts.h;
    if (k == 0.0)
      return 0.0;
  }
  return k;
}

inline double kernel_at_zero(const SmoothingOptions& opts, std::size_t d1) {
  return std::pow(opts.kernel.factor(0.0) / opts.h, static_cast<double>(d1));
}

inline void require_compatible(const StratifiedSample& sample, const ShareVector& p) {
  if (p.strata() != sample.strata())
    fail(ErrorKind::usage, "share vector strata do not match the sample's stratum labels");
}

// Direct O(n) evaluation of lambda-tilde_{d,i}(X_i).
inline double lambda_tilde(const StratifiedSample& sample, const ShareVector& p, const SmoothingOptions& opts,
                           std::size_t i, int d) {
  const auto& xi = sample.row(i);
  require_compatible(sample, p);
  const std::size_t n = sample.n();
  if (n < 2)
    return 0.0;
  if (sample.n_dw(d, xi.w) == 0)
    fail(ErrorKind::empty_stratum, "empty stratum " + stratum_name(d, sample.strata()[xi.w]));
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i && opts.leave_one_out)
      continue;
    const auto& xj = sample.rows()[j];
    if (xj.d != d || xj.w != xi.w || xj.v2 != xi.v2)
      continue;
    s += scaled_kernel(opts, xj.v1, xi.v1);
  }
  const double weight = p(d, xi.w) / sample.q_hat(d, xi.w);
  return weight * s / static_cast<double>(n - 1);
}

inline std::pair<double, double> propensity_tilde(const StratifiedSample& sample, const ShareVector& p,
                                                  const SmoothingOptions& opts, std::size_t i) {
  const double l1 = lambda_tilde(sample, p, opts, i, 1);
  const double l0 = lambda_tilde(sample, p, opts, i, 0);
  if (!(l1 + l0 > 0.0))
    fail(ErrorKind::isolated_point, "row " + std::to_string(i + 1) + " has no kernel neighbours");
  const double p1 = l1 / (l1 + l0);
  return {p1, 1.0 - p1};
}

inline int trimming_indicator(double lambda1, double lambda0, double delta_n) {
  return std::min(lambda1, lambda0) >= delta_n ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Profile index: rows with identical (V1, V2, W, D) share every kernel sum.

class ProfileIndex {
public:
  struct Profile {
    std::size_t representative;  // a row carrying this profile
    std::size_t cell;            // (V2, W) cell id
    int d;
    std::size_t w;
  };

  explicit ProfileIndex(const StratifiedSample& sample) : sample_(&sample) {
    using CellKey = std::pair<std::size_t, std::vector<long>>;
    using ProfileKey = std::tuple<std::size_t, std::vector<long>, std::vector<double>, int>;
    std::map<CellKey, std::size_t> cells;
    std::map<ProfileKey, std::size_t> profiles;
    row_profile_.resize(sample.n());
    for (std::size_t i = 0; i < sample.n(); ++i) {
      const auto& r = sample.rows()[i];
      auto [cit, cnew] = cells.try_emplace(CellKey{r.w, r.v2}, cells.size());
      if (cnew)
        cell_profiles_.emplace_back();
      auto [pit, pnew] = profiles.try_emplace(ProfileKey{r.w, r.v2, r.v1, r.d}, profiles_.size());
      if (pnew) {
        profiles_.push_back({i, cit->second, r.d, r.w});
        cell_profiles_[cit->second].push_back(pit->second);
      }
      row_profile_[i] = pit->second;
    }
  }

  const StratifiedSample& sample() const noexcept { return *sample_; }
  std::size_t size() const noexcept { return profiles_.size(); }
  const Profile& profile(std::size_t k) const { return profiles_[k]; }
  std::size_t row_profile(std::size_t i) const { return row_profile_[i]; }
  const std::vector<std::vector<std::size_t>>& cells() const noexcept { return cell_profiles_; }
  std::span<const double> v1(std::size_t k) const { return sample_->rows()[profiles_[k].representative].v1; }

private:
  const StratifiedSample* sample_;
  std::vector<Profile> profiles_;
  std::vector<std::size_t> row_profile_;
  std::vector<std::vector<std::size_t>> cell_profiles_;
};

// Kernel sums for a multiset of rows of a sample (the sample
// itself, or a bootstrap draw). Everything here is independent of the share
// vector; lambda-tilde at p is a per-stratum rescaling of `a`.
class KernelCache {
public:
  struct ProfileSums {
    std::size_t count = 0;
    double sum_y = 0.0;
    double a[2] = {0.0, 0.0};  // sum_{D_j = d, same cell} K_h, self dropped if leave-one-out
    double b[2] = {0.0, 0.0};  // same with Y_j, self term NOT removed
    bool design_trimmed = false;
  };

  // The sample must outlive the cache.
  KernelCache(const StratifiedSample& sample, const SmoothingOptions& opts)
      : KernelCache(std::make_shared<const ProfileIndex>(sample), opts, identity_rows(sample.n())) {}

  KernelCache(std::shared_ptr<const ProfileIndex> shared_index, const SmoothingOptions& opts,
              std::vector<std::size_t> rows)
      : index_(std::move(shared_index)), opts_(opts), rows_(std::move(rows)) {
    opts_.validate();
    const ProfileIndex& index = *index_;
    const auto& sample = index.sample();
    if (rows_.empty())
      fail(ErrorKind::empty_input, "kernel cache needs at least one row");
    n_ = rows_.size();
    num_strata_ = sample.num_strata();
    n_dw_.assign(2 * num_strata_, 0);
    sums_.assign(index.size(), {});
    for (std::size_t i : rows_) {
      const auto& r = sample.rows()[i];
      auto& ps = sums_[index.row_profile(i)];
      ++ps.count;
      ps.sum_y += r.y;
      ++n_dw_[cell_index(r.d, r.w)];
    }
    k0_ = opts_.leave_one_out ? kernel_at_zero(opts_, sample.d1()) : 0.0;

    for (const auto& cell : index.cells()) {
      for (std::size_t k : cell) {
        auto& target = sums_[k];
        if (target.count == 0)
          continue;
        const int dk = index.profile(k).d;
        for (std::size_t l : cell) {
          const auto& src = sums_[l];
          if (src.count == 0)
            continue;
          const double kern = sample.d1() == 0 ? 1.0 : scaled_kernel(opts_, index.v1(l), index.v1(k));
          if (kern == 0.0)
            continue;
          const int dl = index.profile(l).d;
          target.a[dl] += static_cast<double>(src.count) * kern;
          target.b[dl] += src.sum_y * kern;
        }
        target.a[dk] -= k0_;
        if (target.a[dk] < 0.0)  // rounding guard, exact zero when alone
          target.a[dk] = 0.0;
        const double denom = static_cast<double>(n_ > 1 ? n_ - 1 : 1);
        target.design_trimmed =
            trimming_indicator(target.a[1] / denom, target.a[0] / denom, opts_.delta_n) == 0;
      }
    }
  }

  const ProfileIndex& index() const noexcept { return *index_; }
  const std::shared_ptr<const ProfileIndex>& shared_index() const noexcept { return index_; }
  const StratifiedSample& sample() const noexcept { return index_->sample(); }
  const SmoothingOptions& options() const noexcept { return opts_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t num_strata() const noexcept { return num_strata_; }
  std::size_t n_dw(int d, std::size_t w) const { return n_dw_[cell_index(d, w)]; }
  double q_hat(int d, std::size_t w) const { return static_cast<double>(n_dw(d, w)) / static_cast<double>(n_); }
  double k0() const noexcept { return k0_; }

  // Virtual rows: row r of this cache is original row rows()[r].
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }
  const Observation& row(std::size_t r) const { return sample().rows()[rows_[r]]; }
  std::size_t profile_of(std::size_t r) const { return index_->row_profile(rows_[r]); }
  const ProfileSums& sums(std::size_t k) const { return sums_[k]; }
  std::size_t num_profiles() const noexcept { return sums_.size(); }

  // Throws when p needs a stratum with no rows in this cache.
  void require_strata(const ShareVector& p) const {
    if (p.strata() != sample().strata())
      fail(ErrorKind::usage, "share vector strata do not match the sample's stratum labels");
    for (std::size_t w = 0; w < num_strata_; ++w)
      for (int d = 0; d < 2; ++d)
        if (n_dw(d, w) == 0)
          fail(ErrorKind::empty_stratum, "empty stratum " + stratum_name(d, sample().strata()[w]));
  }

  bool has_empty_stratum() const {
    for (auto c : n_dw_)
      if (c == 0)
        return true;
    return false;
  }

  // lambda-tilde_{d} at a row of profile k.
  double lambda(std::size_t k, int d, const ShareVector& p) const {
    const std::size_t w = index_->profile(k).w;
    const double weight = p(d, w) / q_hat(d, w);
    return weight * sums_[k].a[d] / static_cast<double>(n_ - 1);
  }

  bool trimmed(std::size_t k, const ShareVector& p) const {
    if (opts_.trim_basis == TrimBasis::design)
      return sums_[k].design_trimmed;
    return trimming_indicator(lambda(k, 1, p), lambda(k, 0, p), opts_.delta_n) == 0;
  }

private:
  static std::vector<std::size_t> identity_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
  }

  std::shared_ptr<const ProfileIndex> index_;
  SmoothingOptions opts_;
  std::vector<std::size_t> rows_;
  std::size_t n_ = 0;
  std::size_t num_strata_ = 0;
  std::vector<std::size_t> n_dw_;
  std::vector<ProfileSums> sums_;
  double k0_ = 1.0;
};

} // namespace stratfx
