#pragma once

#include <cmath>
#include <cstdint>

#include "slamf/core.hpp"

namespace slamf {

// Deterministic 64-bit generator used by every fixture generator, chosen so
// fixtures are reproducible from the documentation alone. The update is the
// public-domain SplitMix64 sequence:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z xor (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z xor (z >> 27)) * 0x94D049BB133111EB
//   output = z xor (z >> 31)
//
// Doubles in [0, 1) take the top 53 bits of the output; Gaussian draws use
// one Box-Muller evaluation per call (two uniforms, cosine branch only, no
// cached second value), so the draw count per call is fixed and documented.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // One Box-Muller evaluation; the first uniform is shifted into (0, 1] so
  // the logarithm is always finite.
  double gaussian(double sigma = 1.0) {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  Vec3 gaussian_vec3(double sigma = 1.0) {
    return Vec3(gaussian(sigma), gaussian(sigma), gaussian(sigma));
  }

  Vec6 gaussian_vec6(double sigma = 1.0) {
    Vec6 out;
    for (int i = 0; i < 6; ++i) out(i) = gaussian(sigma);
    return out;
  }

 private:
  std::uint64_t state_;
};

}  // namespace slamf
