#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace encore {

/// Deterministic counter-free PRNG (PCG-XSH-RR 64/32). Bit-identical output
/// on every platform, cheap to seed, cheap to fork into substreams.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : state_(0), inc_((stream << 1u) | 1u) {
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform in [0, n). Unbiased via rejection.
  uint32_t uniform_int(uint32_t n) {
    uint32_t threshold = (-n) % n;
    for (;;) {
      uint32_t r = next_u32();
      if (r >= threshold) return r % n;
    }
  }

  /// Uniform in [0, 1).
  double uniform01() { return next_u32() * 0x1.0p-32; }

  /// Standard normal via Box-Muller (one draw per call, pair cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  uint64_t state() const { return state_; }
  uint64_t inc() const { return inc_; }
  void restore(uint64_t state, uint64_t inc) {
    state_ = state;
    inc_ = inc;
    has_cached_ = false;
  }

 private:
  uint64_t state_;
  uint64_t inc_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Stable 64-bit mix for deriving independent substream seeds from a master
/// seed plus structural tags (step index, layer index, purpose id, ...).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class... Tags>
uint64_t derive_seed(uint64_t seed, uint64_t tag, Tags... rest) {
  uint64_t s = mix_seed(seed, tag);
  if constexpr (sizeof...(rest) == 0) {
    return s;
  } else {
    return derive_seed(s, static_cast<uint64_t>(rest)...);
  }
}

}  // namespace encore
