#pragma once

#include <cstdint>
#include <utility>

namespace stpose {

// Deterministic generator (xoshiro256** seeded through splitmix64). Every random
// decision in the project flows through an explicitly seeded instance; the raw
// bit stream does not depend on the standard library, so runs reproduce exactly
// within a build.
//
// One master seed per run. Work that must not depend on processing order
// (per-frame augmentation, per-sequence synthesis, per-stage init) draws from a
// named substream derived from (seed, stream id); everything else consumes its
// stream in plain code order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derived stream for (seed, id); `id` values are small fixed tags hashed with
  // the component name by the callers.
  static Rng substream(std::uint64_t seed, std::uint64_t id);

  // Stable 64-bit tag for a substream name.
  static std::uint64_t tag(const char* name);

  std::uint64_t next_u64();

  // Uniform on [0,1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer on [lo, hi] inclusive, rejection sampled (unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  // Fisher-Yates; permutes [first, last) in place.
  template <class It>
  void shuffle(It first, It last) {
    const std::int64_t n = last - first;
    for (std::int64_t i = n - 1; i > 0; --i) {
      std::int64_t j = uniform_int(0, i);
      using std::swap;
      swap(first[i], first[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace stpose
