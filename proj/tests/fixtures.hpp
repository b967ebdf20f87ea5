#pragma once

// Small random samples for the unit tests. Outcomes depend on the
// covariates so that estimates move with the share vector.

#include <cstdint>
#include <string>
#include <vector>

#include "stratfx/rng.hpp"
#include "stratfx/sample.hpp"

namespace fixtures {

// Discrete covariates only: v2 in {0,1,2} x {0,1}, `strata` labels.
inline stratfx::StratifiedSample discrete(std::uint64_t seed, std::size_t n, std::size_t strata = 1) {
  stratfx::CounterRng rng(seed);
  std::vector<std::string> labels;
  for (std::size_t w = 0; w < strata; ++w)
    labels.push_back(strata == 1 ? "all" : "s" + std::to_string(w));
  std::vector<stratfx::Observation> rows;
  for (std::size_t i = 0; i < n; ++i) {
    stratfx::Observation o;
    o.w = i % strata;
    o.d = static_cast<int>((i / strata) % 2);
    const long a = static_cast<long>(rng.below(3));
    const long b = static_cast<long>(rng.below(2));
    o.v2 = {a, b};
    o.y = 1.0 + 0.7 * a - 0.4 * b + o.d * (1.5 + 0.8 * a) + 0.3 * static_cast<double>(o.w) + rng.normal();
    rows.push_back(o);
  }
  return {rows, labels};
}

// One continuous covariate in (-1,1), one binary discrete covariate, and a
// treatment probability that rises with v1.
inline stratfx::StratifiedSample continuous(std::uint64_t seed, std::size_t n, std::size_t strata = 1) {
  stratfx::CounterRng rng(seed);
  std::vector<std::string> labels;
  for (std::size_t w = 0; w < strata; ++w)
    labels.push_back(strata == 1 ? "all" : "s" + std::to_string(w));
  std::vector<stratfx::Observation> rows;
  for (std::size_t i = 0; i < n; ++i) {
    stratfx::Observation o;
    o.w = i % strata;
    o.d = static_cast<int>((i / strata) % 2);
    const double lo = o.d == 1 ? -0.8 : -1.0;
    const double v = rng.uniform(lo, lo + 1.8);
    o.v1 = {v};
    o.v2 = {static_cast<long>(rng.below(2))};
    o.y = v + 0.5 * static_cast<double>(o.v2[0]) + o.d * (1.0 + v * v) + 0.5 * rng.normal();
    rows.push_back(o);
  }
  return {rows, labels};
}

} // namespace fixtures
