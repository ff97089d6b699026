#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dynaperc {

/// SplitMix64 finalizer. Used to derive independent child seeds so that the
/// stream assigned to (seed, index) does not depend on scheduling.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

// Stream tags keep environment and walk randomness disjoint for a master seed.
inline constexpr std::uint64_t kEnvStream = 0x656e76ULL;
inline constexpr std::uint64_t kWalkStream = 0x77616c6bULL;

/// Thin wrapper over mt19937_64 with portable conversions (the std
/// distributions are implementation-defined, which would break bit-exact
/// reproducibility across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  double exponential(double rate) { return -std::log(uniform_open0()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dynaperc
