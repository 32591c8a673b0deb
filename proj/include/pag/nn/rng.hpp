#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace pag::nn {

// Deterministic random source. Wraps mt19937_64 but implements its own
// uniform/normal transforms so that streams are reproducible across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : base_seed_(seed), engine_(seed) {}

  // Derive an independent stream from the construction seed and a label.
  // Forking is a pure function of (seed, label), not of draw history, so
  // adding draws to one stream does not shift the others.
  Rng fork(const std::string& label) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char c : label) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return Rng(seed_mix(h));
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n), n >= 1.
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(engine_()) * n) >> 64);
  }

  // Standard normal via Box-Muller; caches the second draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  uint64_t seed_mix(uint64_t salt) const {
    // splitmix64 over (base seed ^ salt)
    uint64_t z = base_seed_ ^ salt;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t base_seed_ = 0;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pag::nn
