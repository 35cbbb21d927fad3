#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace stsn {

/**
 * Deterministic random stream (splitmix64). Hand-rolled distributions so
 * sequences are bitwise reproducible independent of the standard library
 * implementation. Streams can be derived hierarchically from a master seed
 * so parallel consumers (one per problem, per step, ...) draw independently
 * of scheduling order.
 */
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  static uint64_t mix(uint64_t a, uint64_t b) {
    // 2-round splitmix on the combined words; good enough as a stream hash.
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Derive an independent stream from (seed, path...), e.g.
  /// Rng::derive(seed, {kStreamAugment, step, slot}).
  static Rng derive(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t s = seed;
    for (uint64_t p : path) s = mix(s, p);
    return Rng(s);
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n) {
    // Unbiased via 128-bit multiply rejection (Lemire).
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * un;
    auto lo = static_cast<uint64_t>(m);
    if (lo < un) {
      uint64_t t = (-un) % un;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * un;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<int64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (no caching: one draw, two uniforms).
  double normal() {
    double u1 = 0.0;
    do { u1 = next_unit(); } while (u1 <= 0.0);
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return next_unit() < p; }

 private:
  uint64_t state_;
};

// Stream tags for Rng::derive paths.
enum : uint64_t {
  kStreamInit = 1,
  kStreamSlots = 2,
  kStreamAugment = 3,
  kStreamShuffle = 4,
  kStreamDropout = 5,
  kStreamProblem = 6,
};

// Root seed for evaluation-time slot noise. Fixed rather than taken from the
// training seed so that a given set of parameters scores identically no
// matter which run evaluates it. Evaluation must sample slots: with a shared
// mean vector a mean-only initialization starts every slot identical, the
// slot/location attention stays exactly symmetric through every iteration,
// and the decomposition collapses to K copies of the pooled image.
inline constexpr uint64_t kEvalSeed = 0x6576616c;  // "eval"

}  // namespace stsn
