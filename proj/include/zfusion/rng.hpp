#pragma once

#include <cmath>
#include <cstdint>

#include "zfusion/tensor.hpp"

namespace zfusion {

/// Deterministic splitmix64 generator. Distributions are written out by hand
/// (no std::*_distribution) so streams are bit-identical across platforms.
/// `derive(stream)` forks an independent stream from the same root seed,
/// which is how per-scene / per-instance generators are made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // avoid log(0)
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Independent generator derived from this one's current state and a stream id.
  Rng derive(std::uint64_t stream) const {
    std::uint64_t z = state_ ^ (0xA0761D6478BD642FULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

  /// Fill with uniform values in [lo, hi).
  void fill_uniform(Tensor& t, double lo, double hi) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
  }

  /// Fill with values whose magnitude stays in [0.3, 1.0); used by the
  /// gradient-check instance generators to keep test inputs away from zero.
  void fill_signed_unit(Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double mag = uniform(0.3, 1.0);
      t[i] = bernoulli(0.5) ? mag : -mag;
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace zfusion
