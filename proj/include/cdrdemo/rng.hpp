#pragma once

#include <cstdint>
#include <string_view>

namespace cdrdemo {

// Portable random number generation. Every draw is defined by integer
// arithmetic on 64-bit words plus IEEE double operations, so sequences are
// identical across platforms and standard libraries (unlike the
// std::*_distribution family, whose algorithms are implementation-defined).
//
//   splitmix64(x):  x += 0x9E3779B97F4A7C15;
//                   z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9;
//                   z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//                   return z ^ (z >> 31);
//
//   Rng is xoshiro256** whose four state words are seeded by four successive
//   splitmix64 outputs starting from the seed.

std::uint64_t splitmix64(std::uint64_t& state);

// Stateless mix of a seed with a stream index; used to derive independent
// per-shard and per-stage seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n > 0. Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via the Marsaglia polar method.
  double normal();
  double lognormal(double mu, double sigma);
  // Poisson: inversion by sequential search for mean < 10, PTRS
  // (Hormann 1993) above.
  std::uint64_t poisson(double mean);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cdrdemo
