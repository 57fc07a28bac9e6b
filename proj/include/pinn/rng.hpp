#pragma once

#include <cmath>
#include <cstdint>

#include "pinn/tensor.hpp"

namespace pinn {

/// Counter-based random stream. A draw is a pure function of (seed, counter),
/// so any (seed, counter) pair replays exactly and independent streams are
/// obtained by splitting rather than by sharing mutable state.
struct Rng {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  explicit Rng(std::uint64_t seed_ = 0, std::uint64_t counter_ = 0)
      : seed(seed_), counter(counter_) {}

  // splitmix64 finalizer; bijective on 64-bit words.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_bits() {
    std::uint64_t v = mix(seed ^ mix(counter));
    ++counter;
    return v;
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two counter slots per draw.
  double normal() {
    double u1 = (static_cast<double>(next_bits() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Independent child stream; disjoint from this one and from other tags.
  Rng split(std::uint64_t tag) const {
    return Rng(mix(seed ^ mix(tag ^ 0xa076bdf1d5dcb7e1ULL)));
  }

  Tensor normal_tensor(std::vector<std::int64_t> shape, double mean = 0.0,
                       double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
    return t;
  }

  Tensor uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
  }
};

/// Zero-mean weights with Var = 2 / (fan_in + fan_out), drawn normal.
inline Tensor glorot_sample(Rng& rng, std::int64_t fan_in, std::int64_t fan_out) {
  if (fan_in < 1 || fan_out < 1)
    throw std::invalid_argument("glorot_sample: fans must be >= 1");
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return rng.normal_tensor({fan_out, fan_in}, 0.0, stddev);
}

}  // namespace pinn
