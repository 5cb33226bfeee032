#pragma once
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace csma_mpr {

// splitmix64 finalizer; good avalanche, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for the RNG stream of one Monte Carlo sample. Keyed on (seed, index) so
// per-sample draws are identical no matter how samples are partitioned across
// threads.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 1));
}

// Uniform double in (0,1]; the explicit mapping keeps results identical across
// standard library implementations (std::uniform_real_distribution is not
// pinned by the standard).
template <class Engine>
double uniform_pos(Engine& eng) {
  return static_cast<double>((eng() >> 11) + 1) * 0x1.0p-53;
}

// Uniform double in [0,1).
template <class Engine>
double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// One CN(0,1) draw (complex Gaussian, unit total variance) via Box-Muller.
template <class Engine>
std::complex<double> complex_gaussian(Engine& eng) {
  const double u1 = uniform_pos(eng);
  const double u2 = uniform01(eng);
  const double r = std::sqrt(-std::log(u1));
  const double th = 2.0 * M_PI * u2;
  return {r * std::cos(th), r * std::sin(th)};
}

}  // namespace csma_mpr
