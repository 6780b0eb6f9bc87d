#pragma once

#include <cmath>
#include <cstdint>

namespace nrf {

/// Deterministic splitmix64 generator. All randomness in the project flows
/// through this so runs are bit-reproducible across platforms; the standard
/// library distributions are implementation-defined and are not used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  /// Derives an independent stream keyed by up to three tags.
  static Rng derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    Rng r(seed ^ 0xd1b54a32d192ed03ULL);
    uint64_t h = r.next_u64();
    h ^= a + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    Rng r2(h);
    h = r2.next_u64();
    h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    Rng r3(h);
    h = r3.next_u64();
    h ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return Rng(h);
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace nrf
