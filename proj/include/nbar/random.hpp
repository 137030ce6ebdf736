#pragma once

/** @file
 * Counter-based random numbers. Every draw is a pure function of a key
 * (derived from the user seed) and a counter (node index, step, stream), so
 * output does not depend on evaluation order or thread count.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace nbar {

/// SplitMix64 finalizer; used to derive keys and replicate seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed of replicate r of a study with the given base seed.
constexpr std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t r) {
  return splitmix64(base ^ splitmix64(r));
}

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  constexpr explicit Philox4x32(Key key) : key_(key) {}
  constexpr explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  constexpr Counter operator()(Counter ctr) const {
    Key k = key_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k[0] += kW0;
        k[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
  Key key_;
};

/// Logical streams sharing one key; keeps node noise, root draws and
/// tagged-branch chains disjoint.
enum class Stream : std::uint32_t {
  node_noise = 0,
  root = 1,
  tagged_branch = 2,
  tagged_branch_type = 3,
};

/**
 * Draws indexed by (stream, 64-bit index, 32-bit sub-index). Each call
 * returns two uniforms in (0,1) with 53 random bits.
 */
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t seed) : philox_(splitmix64(seed)) {}

  std::pair<double, double> uniforms(Stream s, std::uint64_t index,
                                     std::uint32_t sub = 0) const {
    const auto out = philox_({static_cast<std::uint32_t>(index),
                              static_cast<std::uint32_t>(index >> 32), sub,
                              static_cast<std::uint32_t>(s)});
    const std::uint64_t a = (std::uint64_t{out[0]} << 32) | out[1];
    const std::uint64_t b = (std::uint64_t{out[2]} << 32) | out[3];
    return {to_open_unit(a), to_open_unit(b)};
  }

  /// Two independent standard normals (Box-Muller).
  std::pair<double, double> normals(Stream s, std::uint64_t index,
                                    std::uint32_t sub = 0) const {
    const auto [u1, u2] = uniforms(s, index, sub);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(t), r * std::sin(t)};
  }

 private:
  static double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  Philox4x32 philox_;
};

}  // namespace nbar
