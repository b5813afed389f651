#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gconv {

// Deterministic pseudo-random generator (splitmix64 core). The standard
// library distributions are implementation-defined, so sampling goes through
// this class to keep "same seed, same bits" true across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (one fresh pair of uniforms per draw).
  double next_normal() {
    double u1 = 0.0;
    do {
      u1 = next_unit();
    } while (u1 <= 0.0);
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Normal with the given std, resampled until |x| <= cutoff * std.
  double next_truncated_normal(double stddev, double cutoff = 2.0) {
    double z = 0.0;
    do {
      z = next_normal();
    } while (std::abs(z) > cutoff);
    return z * stddev;
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed; used to keep weight init, data
// sampling, and evaluation streams from consuming each other's draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng mix(seed ^ (0xA076'1D64'78BD'642FULL + stream * 0xE703'7ED1'A0B4'28DBULL));
  return mix.next_u64();
}

}  // namespace gconv
