#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "pmelm/errors.hpp"

namespace pmelm {

// splitmix64 (Steele, Lea & Flood 2014): the state is a plain 64-bit counter
// advanced by the golden-gamma increment, and every output is a bijective mix
// of that counter. Substreams are derived by hashing coordinates into a fresh
// seed. All variate algorithms below are fixed so that a (seed, call sequence)
// pair pins the emitted panel exactly:
//   uniform  - top 53 bits mapped into the open interval (0,1)
//   normal   - Box-Muller, two uniforms per variate, no cached spare
//   poisson  - Knuth product search for mean < 10, Hormann PTRS otherwise
//   gamma    - Marsaglia-Tsang squeeze (with the power boost for shape < 1)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on (0,1); endpoints excluded.
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n) by modulo rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  long poisson(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw RateOverflow("poisson mean must be finite and nonnegative");
    if (lambda == 0.0) return 0;
    if (lambda < 10.0) return poisson_knuth(lambda);
    return poisson_ptrs(lambda);
  }

  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v * scale;
    }
  }

 private:
  long poisson_knuth(double lambda) {
    const double limit = std::exp(-lambda);
    long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  // Transformed rejection with squeeze (Hormann 1993), valid for lambda >= 10.
  long poisson_ptrs(double lambda) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::abs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          kf * loglam - lambda - std::lgamma(kf + 1.0))
        return static_cast<long>(kf);
    }
  }

  std::uint64_t state_;
};

// Deterministic substream seed from a base seed and stream coordinates.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t coord) {
  SplitMix64 g(base ^ (coord * 0xD1B54A32D192ED03ull + 0x9E3779B97F4A7C15ull));
  return g.next();
}

}  // namespace pmelm
