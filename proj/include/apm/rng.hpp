#pragma once

#include <cstdint>
#include <random>

namespace apm {

// Deterministic RNG wrapper. std::mt19937_64 output is fully specified by the
// standard; the double conversions below avoid std::uniform_real_distribution,
// whose sequence is implementation-defined. Identical seeds therefore produce
// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n == 0 returns 0.
  std::uint32_t below(std::uint32_t n) {
    if (n == 0) return 0;
    return static_cast<std::uint32_t>(uniform() * n);
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used to derive independent sub-seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace apm
