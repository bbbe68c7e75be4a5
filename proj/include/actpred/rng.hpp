#pragma once

#include <cstdint>
#include <random>

namespace actpred {

/// Seeded random source. Raw draws come from mt19937_64 (bit-exact across
/// standard libraries); derived variates are computed here rather than via
/// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal (Box-Muller, one variate per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace actpred
