#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace omad {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream identifiers so that each use of randomness draws from its own keyed
// sequence, independent of generation order.
enum class RngPurpose : std::uint64_t {
  kPrototype = 1,
  kBonaFideNoise = 2,
  kMorphNoise = 3,
  kSplit = 4,
  kPairing = 5,
  kInit = 6,
  kShuffle = 7,
  kFlip = 8,
  kSubsample = 9,
  kTest = 10,
};

// Counter-based generator: the value at a counter is a pure function of
// (key, counter), so any draw can be regenerated independently.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, RngPurpose purpose, std::uint64_t index = 0)
      : key_(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(purpose)) ^ index)) {}

  constexpr CounterRng derive(std::uint64_t index) const { return CounterRng(key_, index); }

  constexpr std::uint64_t bits(std::uint64_t counter) const { return mix64(key_ ^ mix64(counter)); }

  // Uniform in [0,1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller over counters 2k and 2k+1.
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);  // (0,1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>(uniform(counter) * static_cast<double>(n)) % n;
  }

 private:
  constexpr CounterRng(std::uint64_t key, std::uint64_t index) : key_(mix64(key ^ mix64(index + 0x51))) {}

  std::uint64_t key_;
};

// Sequential view over a CounterRng.
class RngStream {
 public:
  explicit RngStream(CounterRng rng) : rng_(rng) {}
  double uniform() { return rng_.uniform(next_++); }
  double uniform(double lo, double hi) { return rng_.uniform(next_++, lo, hi); }
  double normal() { return rng_.normal(next_++); }
  std::uint64_t below(std::uint64_t n) { return rng_.below(next_++, n); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace omad
