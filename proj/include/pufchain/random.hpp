#pragma once

// Seed derivation and distribution sampling.
//
// std::mt19937_64 is bit-exact across standard libraries but the std::*
// distributions are not, so uniform and normal draws are made here from the
// raw engine output. Every simulated quantity is therefore reproducible from
// its seed on any conforming toolchain.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <utility>

namespace pufchain::rng {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E37'79B9'7F4A'7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58'476D'1CE4'E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D0'49BB'1331'11EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive(std::uint64_t base) { return mix64(base); }

template <typename... Rest>
constexpr std::uint64_t derive(std::uint64_t base, std::uint64_t next, Rest... rest) {
  return derive(mix64(base) ^ mix64(next + 0x632B'E59B'D9B4'E019ULL), static_cast<std::uint64_t>(rest)...);
}

// FNV-1a over a purpose label, so derivations read as derive(seed, tag("latency")).
constexpr std::uint64_t tag(std::string_view label) {
  std::uint64_t h = 0xCBF2'9CE4'8422'2325ULL;
  for (char c : label) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x0000'0100'0000'01B3ULL;
  }
  return h;
}

// Uniform double in (0, 1]: never zero, so it is safe under log().
constexpr double unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

// Box-Muller pair from two raw 64-bit words.
inline std::pair<double, double> normal_pair(std::uint64_t a, std::uint64_t b) {
  const double r = std::sqrt(-2.0 * std::log(unit_open(a)));
  const double theta = 2.0 * std::numbers::pi * unit_open(b);
  return {r * std::cos(theta), r * std::sin(theta)};
}

using Engine = std::mt19937_64;

inline Engine engine(std::uint64_t seed) { return Engine(seed); }

// Integer in [0, n). Modulo bias is below 2^-40 for every n used here.
inline std::uint64_t below(Engine& e, std::uint64_t n) { return n == 0 ? 0 : e() % n; }

inline double uniform01(Engine& e) { return unit_open(e()) - 0x1.0p-53; }

class NormalStream {
 public:
  explicit NormalStream(Engine& e) : engine_(&e) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const std::uint64_t a = (*engine_)();
    const std::uint64_t b = (*engine_)();
    auto [z0, z1] = normal_pair(a, b);
    spare_ = z1;
    has_spare_ = true;
    return z0;
  }

 private:
  Engine* engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pufchain::rng
