#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace merge {

// Deterministic random stream. All distributions are implemented on top of
// the raw 64-bit engine output so that sequences are identical across
// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be > 0 and small against 2^64.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(eng_()) *
                             static_cast<unsigned __int128>(n)) >> 64);
  }

  // Standard normal via Box-Muller; consumes two uniforms per sample.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double exponential(double rate) {
    return -std::log(1.0 - uniform01()) / rate;
  }

  double laplace(double mu, double b) {
    double u = uniform01() - 0.5;
    double t = std::max(1.0 - 2.0 * std::fabs(u), 1e-300);
    return mu - b * (u < 0 ? -1.0 : 1.0) * std::log(t);
  }

  // Exact truncated Laplace via rejection.
  double laplace_truncated(double mu, double b, double lo, double hi) {
    for (;;) {
      double x = laplace(mu, b);
      if (x >= lo && x <= hi) return x;
    }
  }

 private:
  std::mt19937_64 eng_;
};

// Derives an independent child seed from a base seed and a stream id
// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace merge
