#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "qclmix/common.hpp"

namespace qclmix {

// Deterministic random number generation used everywhere in the library.
//
// The generator is xoshiro256** (Blackman & Vigna), seeded by expanding a
// 64-bit seed through splitmix64. Sub-streams are derived with fork(), which
// feeds (seed, stream id) through splitmix64. Both algorithms are fully
// specified, so any sequence of draws is bit-identical across platforms and
// standard libraries. Distributions are implemented here rather than with
// <random>, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  // Derived stream: deterministic function of (seed, stream_id).
  Rng fork(std::uint64_t stream_id) const {
    std::uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL + stream_id);
    std::uint64_t mixed = splitmix64(x);
    return Rng(mixed ^ stream_id);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Multiply-high mapping; bias is at most n / 2^64.
  std::uint64_t bounded(std::uint64_t n) {
    detail::require(n > 0, "Rng::bounded: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Two uniforms per draw; no cached state,
  // so the stream position is a simple function of the draw count.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(alpha, 1) via Marsaglia-Tsang squeeze; alpha < 1 handled with the
  // standard boost gamma(alpha) = gamma(alpha + 1) * U^(1/alpha).
  double gamma(double alpha) {
    detail::require(alpha > 0.0, "Rng::gamma: alpha must be positive");
    if (alpha < 1.0) {
      const double g = gamma(alpha + 1.0);
      double u = uniform01();
      while (u <= 0.0) u = uniform01();
      return g * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform01();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
        return d * v;
      }
    }
  }

  // Shuffle indices in place (Fisher-Yates).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    shuffle(p);
    return p;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

}  // namespace qclmix
