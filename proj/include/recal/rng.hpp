#pragma once

// Portable seeded randomness.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The std::*_distribution adaptors are not (their algorithms are
// implementation-defined), so every conversion to doubles, coin flips and
// Gaussians is done here by hand. Keep this algorithm fixed: trace
// reproducibility across platforms depends on it.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace recal {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream id), seeded through std::seed_seq.
  static Rng stream(std::uint64_t seed, std::uint32_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream_id};
    Rng r(0);
    r.engine_.seed(seq);
    return r;
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0,1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  /// Standard normal via Box-Muller (one variate per call, two uniforms).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0,1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return engine_();
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return lo + x % span;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace recal
