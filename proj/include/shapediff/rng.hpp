//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_RNG_HPP_
#define SHAPEDIFF_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include <Eigen/Core>

namespace shapediff {

/// Deterministic xoshiro256++ generator. We do not use <random> distributions
/// because their output is implementation-defined; every draw here is fully
/// specified by our own code, so seeds reproduce bit-for-bit everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  /// Derives an independent substream from (seed, tag, indices). Used to give
  /// every molecule / step / generation its own reproducible stream.
  static Rng stream(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                    std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
    for (char ch : tag) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
      h *= 0x100000001b3ull;
    }
    for (std::uint64_t v : {a, b, c}) {
      std::uint64_t t = v;
      h ^= splitmix64(t);
      h *= 0x100000001b3ull;
    }
    return Rng(h);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Eigen::Vector3d normal3() {
    const double a = normal(), b = normal(), c = normal();
    return {a, b, c};
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace shapediff

#endif  // SHAPEDIFF_RNG_HPP_
