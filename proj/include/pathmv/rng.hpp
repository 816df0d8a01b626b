#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

// Deterministic random streams. Everything here is fixed-algorithm (no
// std::*_distribution, whose output is implementation-defined) so that runs
// are reproducible byte-for-byte on any platform with IEEE doubles.
//
// Two layouts are provided:
//   * Rng            — a sequential stream (splitmix64) for annealing moves,
//                      policy sampling, initialization.
//   * counter_normal — a stateless draw addressed by (seed, path, step,
//                      channel). Path i gets the same noise no matter how
//                      many paths are simulated alongside it.

namespace pathmv {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Named sub-stream of a master seed: derive_seed(master, "anneal"),
// derive_seed(master, "round", 3), ... Collisions across distinct tags are
// as unlikely as 64-bit hash collisions.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  return mix64(master ^ mix64(fnv1a64(tag) ^ 0x9E3779B97F4A7C15ULL));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index) {
  return mix64(derive_seed(master, tag) ^ mix64(index ^ 0xD1B54A32D192ED03ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1] — safe under log()
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Box-Muller; consumes two words per draw.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform over {0, .., n-1}. Modulo bias is O(n / 2^64): irrelevant here.
  std::size_t uniform_below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_below: n must be positive");
    return static_cast<std::size_t>(next_u64() % n);
  }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t path,
                                  std::uint64_t step, std::uint64_t channel) {
  std::uint64_t h = seed;
  h = mix64(h ^ (path + 0xA0761D6478BD642FULL));
  h = mix64(h ^ (step + 0xE7037ED1A0B428DBULL));
  h = mix64(h ^ (channel + 0x8EBC6AF09C88C6E3ULL));
  return h;
}
}  // namespace detail

// One standard normal, addressed by coordinates rather than by draw order.
inline double counter_normal(std::uint64_t seed, std::uint64_t path,
                             std::uint64_t step, std::uint64_t channel) {
  const std::uint64_t h = detail::counter_hash(seed, path, step, channel);
  const std::uint64_t w2 = mix64(h ^ 0x589965CC75374CC3ULL);
  const double u1 = static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(w2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace pathmv
