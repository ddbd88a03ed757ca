#pragma once

// Deterministic, platform-stable integer mixing and pseudo-random generation.
//
// Everything that feeds a green/red partition goes through the functions in
// this header, so their exact bit-level behaviour is part of the detection
// contract: a detector built on another platform must reproduce the same
// partitions. Only fixed-width unsigned arithmetic is used.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace seekmark {

/// splitmix64 finalizer (Steele, Lea, Flood). A bijection on 64-bit words
/// with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// 64-bit FNV-1a over bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named pipeline stage: mix(master, stage, index).
/// Stages can be reordered without their seeds colliding.
constexpr std::uint64_t child_seed(std::uint64_t master, std::string_view stage,
                                   std::uint64_t index) noexcept {
  return mix64(mix64(master ^ fnv1a64(stage)) + kGolden * (index + 1));
}

/// xoshiro256** (Blackman, Vigna), state expanded from a 64-bit seed with
/// splitmix64. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& word : s_) {
      x += kGolden;
      word = mix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Unbiased integer in [0, bound) by Lemire's multiply-and-reject method.
  /// bound must be positive.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    __uint128_t m = static_cast<__uint128_t>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Standard Gumbel variate.
  double gumbel() noexcept {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return -std::log(-std::log(u));
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
};

}  // namespace seekmark
