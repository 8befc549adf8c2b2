#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nlpca {

// SplitMix64 finalizer. Used to derive independent seed streams from a base
// seed plus stream indices, so that results do not depend on the order in
// which jobs are executed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ b);
}

inline std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return seed_mix(seed_mix(a, b), c);
}

/// Seeded random value stream with a fixed, portable bit-stream.
///
/// The engine is std::mt19937_64, whose output sequence is fully specified
/// by the C++ standard, and every value transform is implemented here rather
/// than with the standard <random> distributions, whose output is
/// implementation-defined. Identical seeds therefore produce identical
/// values on every platform and standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1): the top 53 bits of one engine output.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  /// Standard normal via Box-Muller. Consumes two engine outputs per pair of
  /// normals; the second value of a pair is cached and returned next.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n), n >= 1.
  std::uint32_t below(std::uint32_t n) {
    const auto v = static_cast<std::uint32_t>(uniform01() * n);
    return v < n ? v : n - 1;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace nlpca
