#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

// Seeded randomness used everywhere in flatgrad. Engines are std::mt19937_64
// (bit-exact by the standard); all distributions are hand-rolled because the
// std distribution objects are implementation-defined and would break the
// reproducibility contract across toolchains.

namespace flatgrad {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream seed for (master, stream). Chaining a second tag gives
// per-epoch or per-batch streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0xda942042e4dd58b5ULL;
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return derive_seed(derive_seed(master, stream), index);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform on [0, 1).
inline double uniform_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform on (0, 1); safe as a log argument.
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_double(rng);
}

// Integer in [0, n). Rejection-free modulo bias is negligible for the n used
// here (n << 2^64), but keep it exact with rejection anyway.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Box-Muller, one variate per call (two uniforms consumed).
inline double normal(Rng& rng) {
  const double u1 = uniform_open(rng);
  const double u2 = uniform_double(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

inline double gumbel(Rng& rng) {
  return -std::log(-std::log(uniform_open(rng)));
}

// Marsaglia-Tsang; shapes < 1 boosted via Gamma(a) = Gamma(a+1) * U^(1/a).
inline double gamma_sample(Rng& rng, double shape) {
  if (shape <= 0.0) throw std::invalid_argument("gamma_sample: shape must be positive");
  if (shape < 1.0) {
    const double u = uniform_open(rng);
    return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform_open(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double beta_sample(Rng& rng, double a, double b) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("beta_sample: shapes must be positive");
  const double x = gamma_sample(rng, a);
  const double y = gamma_sample(rng, b);
  return x / (x + y);
}

}  // namespace flatgrad
