#pragma once

// Portable random number generation.
//
// Every transformation from raw 64-bit words to real variates is written out here
// so that a (seed, call sequence) pair produces bit-identical output regardless of
// the standard library in use.

#include <cmath>
#include <cstdint>
#include <limits>

namespace msw {

/// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derive the seed of sub-stream `stream` from `master`.
///
/// For a fixed master the map stream -> seed is injective, so distinct trials never
/// share a stream.
constexpr std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

/// xoshiro256** generator seeded through SplitMix64.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9E3779B97F4A7C15ULL;
      s = mix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }

  result_type next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Centred Laplace variate with unit variance (scale 1/sqrt(2)).
  double laplace() noexcept {
    const double u = uniform() - 0.5;
    const double mag = -std::log1p(-2.0 * std::abs(u)) * M_SQRT1_2;
    return u < 0 ? -mag : mag;
  }

  /// Uniform sign in {-1, +1}.
  double rademacher() noexcept { return (next() >> 63) ? 1.0 : -1.0; }

  /// Bernoulli(p) with 53-bit resolution.
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace msw
