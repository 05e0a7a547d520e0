#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace taskgrid {

// splitmix64 finalizer; used to derive independent substream seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_str(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Seeded random stream. Wraps mt19937 (whose output sequence is pinned by the
// standard) and hand-rolls the distributions so draws are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(mix_seed(seed, 0))) {}

  uint32_t next_u32() { return gen_(); }

  // Unbiased integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t bound = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    uint64_t lim = (uint64_t(1) << 32) / bound * bound;
    uint64_t r;
    do {
      r = next_u32();
    } while (r >= lim);
    return lo + static_cast<int>(r % bound);
  }

  // [0, 1) with 24-bit resolution.
  float uniform_real() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  bool coin() { return (next_u32() & 1u) != 0; }

  // Box-Muller; no cached spare so the state is exactly the mt19937 state.
  float normal() {
    double u1 = (static_cast<double>(next_u32()) + 1.0) * (1.0 / 4294967296.0);
    double u2 = static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2));
  }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  std::mt19937 gen_;
};

}  // namespace taskgrid
