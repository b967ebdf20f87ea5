#pragma once

// Synthetic stand-in for a job-training experiment: one stratum, random
// assignment at 2:1, three binary background indicators, and earnings with
// the same noise level in both arms.

#include <cstdint>
#include <string>
#include <vector>

#include "stratfx/rng.hpp"
#include "stratfx/sample.hpp"

namespace jtpa {

struct FixtureSpec {
  std::size_t n = 5732;
  double q1 = 2.0 / 3.0;
  double base = 12000.0;
  double effect = 1900.0;
  double noise_sd = 9000.0;
  std::uint64_t seed = 1;
};

inline const std::vector<std::string>& covariate_names() {
  static const std::vector<std::string> names{"hsged", "minority", "young"};
  return names;
}

inline stratfx::StratifiedSample make_fixture(const FixtureSpec& spec = {}) {
  stratfx::CounterRng rng(spec.seed);
  std::vector<stratfx::Observation> rows;
  rows.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    stratfx::Observation o;
    o.d = rng.uniform() < spec.q1 ? 1 : 0;
    const long hs = rng.uniform() < 0.55 ? 1 : 0;
    const long minority = rng.uniform() < 0.45 ? 1 : 0;
    const long young = rng.uniform() < 0.40 ? 1 : 0;
    o.v2 = {hs, minority, young};
    double mean = spec.base + 3500.0 * hs - 1500.0 * minority - 800.0 * young;
    if (o.d == 1)
      mean += spec.effect + 300.0 * hs - 200.0 * young;
    o.y = mean + spec.noise_sd * rng.normal();
    rows.push_back(std::move(o));
  }
  return {std::move(rows), {"all"}};
}

inline stratfx::Schema fixture_schema() { return {"earnings", "treat", "", {}, covariate_names()}; }

} // namespace jtpa
