#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace otslim {

// splitmix64 finalizer; derives well-separated stream seeds from a master
// seed so that unrelated components (data, init, shuffling, projections)
// draw from independent sequences.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Fresh entropy for explicitly unseeded runs.
inline std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// Deterministic random stream. All randomness in the library flows through
// explicitly passed Rng instances. Uniform and Gaussian draws are generated
// from raw mt19937_64 output instead of std::*_distribution, whose sequences
// are implementation-defined; this keeps results bit-identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1), 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. Stateless (no cached spare) so the
  // number of underlying draws per call is fixed.
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1]; keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n). Rejection sampling to avoid modulo bias.
  int uniform_int(int n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<std::uint64_t>(n);
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return static_cast<int>(r % static_cast<std::uint64_t>(n));
  }

  // Fisher-Yates shuffle driven by this stream.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

  // Child stream seeded from the current position of this one.
  Rng fork() { return Rng(mix_seed(next_u64(), 0)); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace otslim
