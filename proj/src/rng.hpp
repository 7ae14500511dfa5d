#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "error.hpp"

namespace ocl {

// Portable seeded randomness for stream plans, synthesis and replay draws.
// The generator is pinned so that sequences can be reproduced from the seed
// in any language:
//   * state: xoshiro256** 1.0 (Blackman & Vigna), seeded with four
//     consecutive outputs of splitmix64(seed)
//   * next_double: top 53 bits of next_u64, scaled by 2^-53
//   * below(n): rejection sampling, threshold (2^64 - n) mod n, then modulo
//   * gaussian: Box-Muller cosine branch, one value per call, consuming
//     exactly two uniforms (u1 = 1 - next_double, u2 = next_double)
//   * shuffle: Fisher-Yates from the back, j = below(i + 1)

inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Single-application splitmix64 finalizer, used to derive sub-seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  return splitmix64_next(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, bound), unbiased.
  uint64_t below(uint64_t bound) {
    if (bound == 0) throw Error(ErrorCode::invalid_argument, "Rng::below: bound must be positive");
    const uint64_t threshold = (0 - bound) % bound;
    uint64_t r;
    do {
      r = next_u64();
    } while (r < threshold);
    return r % bound;
  }

  // Standard normal draw.
  double next_gaussian() {
    const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (size_t i = values.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  // Deterministic draw of `count` distinct indices from [0, n), in draw order.
  std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t count) {
    if (count > n)
      throw Error(ErrorCode::invalid_argument, "sample_without_replacement: count exceeds n");
    std::vector<uint64_t> pool(n);
    for (uint64_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<uint64_t> picked;
    picked.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
      const uint64_t j = i + below(n - i);
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
    return picked;
  }

  const uint64_t* state() const { return state_; }
  void set_state(const uint64_t words[4]) {
    for (int i = 0; i < 4; ++i) state_[i] = words[i];
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
};

}  // namespace ocl
