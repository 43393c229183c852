#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vmc {

// SplitMix64 finalizer. Derives statistically independent child seeds from a
// master seed and an integer tag, so adding a new consumer never perturbs the
// streams of existing ones.
inline std::uint64_t seed_hash(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t seed_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return seed_hash(seed_hash(seed, a), b);
}

inline std::uint64_t seed_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
  return seed_hash(seed_hash(seed_hash(seed, a), b), c);
}

/// Deterministic random stream with a documented draw contract:
///   uniform() consumes one engine word and returns a value in [0,1);
///   normal() consumes two engine words (Box-Muller, no cached spare).
/// All samplers in this library draw through this class, never through
/// std::*_distribution, so traces are bit-reproducible for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(k_two_pi * u2);
  }

 private:
  static constexpr double k_two_pi = 6.283185307179586476925287;
  std::mt19937_64 gen_;
};

// Stream tags for the independent per-chain streams. Kernel moves, mixture
// selection coins, and regeneration coins never share a stream; that is what
// makes the degenerate-mixture and adaptation-off bit-equality contracts hold.
enum StreamTag : std::uint64_t {
  kStreamMove = 0x4d4f5645,
  kStreamSelect = 0x53454c43,
  kStreamRegen = 0x52454745,
};

}  // namespace vmc
