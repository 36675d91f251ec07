#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ktcf {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent per-instance streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Uniform draw on the open interval (0, 1).
inline double open_unit(Rng &rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  while (x <= 0.0) {
    x = u(rng);
  }
  return x;
}

// Standard Gumbel(0, 1) by inverse transform.
inline double sample_gumbel(Rng &rng) {
  return -std::log(-std::log(open_unit(rng)));
}

inline double sample_beta(Rng &rng, double alpha, double beta) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y == 0.0) { // both draws underflowed at tiny shapes
    return alpha / (alpha + beta);
  }
  return x / (x + y);
}

} // namespace ktcf
