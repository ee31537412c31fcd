#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

namespace crn {

// Counter-free seeded random stream (xoshiro256** seeded via splitmix64).
// Streams derived from (seed, domain, index) are independent for distinct
// tuples, which is how workers and episodes get disjoint randomness.
class Rng {
 public:
  explicit Rng(uint64_t seed) { reseed(seed); }

  static Rng stream(uint64_t seed, uint64_t domain, uint64_t index) {
    uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (domain + 1));
    x = splitmix(x);
    x ^= 0xbf58476d1ce4e5b9ULL * (index + 1);
    x = splitmix(x);
    return Rng(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // Rejection sampling over the top bits keeps the draw exactly uniform.
    const uint64_t bound = n;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  int sign() { return (next_u64() & 1) ? 1 : -1; }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix(x);
    if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
  }

  std::array<uint64_t, 4> s_{};
};

}  // namespace crn
