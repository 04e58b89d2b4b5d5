#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace subspace {

/// Deterministic random stream (SplitMix64 core, Box-Muller normals).
/// Every random draw in the library flows through this type so that a seed
/// pins byte-identical output regardless of platform or thread schedule.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on (0, 1].
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Independent substream identified by `id`; stable across runs.
  Rng derive(std::uint64_t id) const {
    Rng probe(state_ ^ (0xD1B54A32D192ED03ULL * (id + 1)));
    return Rng(probe.next_u64());
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Seed for a cell of a seeded experiment grid, stable under any execution
/// order: chain-derives substreams for each index and collapses to one value.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  Rng r(seed);
  for (std::uint64_t id : ids) r = r.derive(id);
  return r.next_u64();
}

}  // namespace subspace
