#pragma once

// Counter-based random streams.
//
// A stream is identified by a 64-bit key; the n-th draw is
//   x_n = fmix64(key + (n + 1) * 0x9E3779B97F4A7C15)
// (the SplitMix64 output function applied to an addressable counter).
// Uniforms use the top 53 bits, centred so they lie strictly inside (0,1).
// Normals use the Box-Muller transform, consuming two uniforms per pair.
// Keys for sub-streams are derived with derive_key(seed, a, b, ...), so any
// replication can be regenerated from (seed, indices) alone.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace stratfx {

inline constexpr std::uint64_t fmix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t derive_key(std::uint64_t seed,
                                          std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t k = fmix64(seed ^ 0x6A09E667F3BCC909ULL);
  for (auto p : path)
    k = fmix64(k ^ fmix64(p + 0x9E3779B97F4A7C15ULL));
  return k;
}

class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    ++counter_;
    return fmix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform on the open interval (0,1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, bound) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % bound;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace stratfx
