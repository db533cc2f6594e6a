#pragma once

// Counter-based random streams.
//
// Every stochastic routine in the library takes a 64-bit seed and draws from
// a CounterRng keyed by it. The i-th output of a stream is a pure function of
// (key, i), so batch estimators derive one key per trial with derive_seed()
// and the result never depends on how trials are scheduled across workers.

#include <cstdint>
#include <limits>
#include <string_view>

namespace corrmem {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer. A bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over the label bytes. Part of the stable seed contract.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Stream seed for (master, component label, trial index).
///
/// Stable across versions: mix64(base + (index + 1) * gamma) with
/// base = mix64(master ^ mix64(fnv1a(label) + gamma)). For a fixed master and
/// label the map index -> seed is injective (gamma is odd and mix64 is a
/// bijection), so distinct trials never share a seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                    std::uint64_t index) noexcept {
  const std::uint64_t base = mix64(master ^ mix64(hash_label(label) + kGoldenGamma));
  return mix64(base + (index + 1) * kGoldenGamma);
}

/// Output k of the stream is mix64(key + k * gamma). Satisfies
/// UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace corrmem
