// core/include/mgf/rng.hpp
//
// Deterministic random number generation. The standard library distributions
// are implementation-defined, so everything random in this project goes
// through this splitmix64-based generator: identical seeds give identical
// streams on every platform and toolchain.

#ifndef MGF_RNG_HPP_
#define MGF_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mgf {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Mixes extra words into a seed so that substreams (per utterance, per step,
// per tensor, ...) are independent of iteration order.
inline uint64_t derive_seed(uint64_t seed, uint64_t a) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + a);
  splitmix64(s);
  return s;
}
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, then mixed in.
  uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return derive_seed(seed, h);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {
    // Warm up so that small seeds do not produce correlated first draws.
    splitmix64(state_);
    splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform integer in [0, n). Rejection-free Lemire-style reduction is
  // unbiased enough at 64 bits for our purposes, but we keep the strict
  // rejection loop so streams are exactly reproducible and unbiased.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) return 0;
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. No cached spare: one draw costs two
  // uniforms, which keeps the stream position a pure function of call count.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace mgf

#endif  // MGF_RNG_HPP_
