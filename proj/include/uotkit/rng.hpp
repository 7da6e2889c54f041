#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>

namespace uot {

/// xoshiro256** (Blackman & Vigna), state expanded from a 64-bit seed with
/// splitmix64. All derived variates (uniform, normal, index) are computed here
/// rather than through <random> distributions so that a seed yields the same
/// stream on every standard library.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one variate per call, no cached spare).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Independent child stream; used to give each experiment cell its own RNG.
  Rng split();

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace uot
