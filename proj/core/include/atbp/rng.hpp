#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "atbp/error.hpp"

// Deterministic random number streams. The whole pipeline is seeded from one
// 64-bit master seed; every independent unit of work (area, replicate,
// bootstrap world, ...) draws from its own stream derived from the master
// seed and a list of key words, so results do not depend on evaluation order
// or thread count. Generators are implemented here rather than taken from
// <random> because libstdc++/libc++ distribution sequences are not pinned by
// the standard.

namespace atbp {

inline constexpr std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Short ASCII tags ("pred", "boot", ...) as stream key words.
inline constexpr std::uint64_t rng_tag(const char* s) {
  std::uint64_t h = 0;
  for (int i = 0; s[i] != '\0' && i < 8; ++i) {
    h |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
  }
  return h;
}

/// xoshiro256++ stream with derived-substream seeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  /// Stream for (master seed, key words). Same inputs, same stream, always.
  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = master;
    for (std::uint64_t w : key) {
      std::uint64_t s = w;
      h ^= splitmix64_next(s) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return Rng(h);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on (0, 1]; never returns 0 so log() stays finite.
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53);
  }

  /// Standard normal via Box-Muller; one spare cached per pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform01()));
    const double t = 2.0 * std::numbers::pi * uniform01();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Gamma(shape, scale) by Marsaglia-Tsang, with the shape<1 boost.
  double gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) {
      throw invalid_input("gamma: shape and scale must be positive");
    }
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  /// Standard Student t with `dof` degrees of freedom.
  double student_t(double dof) {
    const double z = normal();
    const double chi2 = gamma(0.5 * dof, 2.0);
    return z / std::sqrt(chi2 / dof);
  }

 private:
  void reseed(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : s_) w = splitmix64_next(s);
    has_spare_ = false;
  }

  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace atbp
