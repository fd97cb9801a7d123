#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sddkit {

// splitmix64 finalizer; used to derive independent per-worker seeds.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream + 0x51ab3f2c9d1e8fb7ull));
}

// mt19937_64 core with hand-rolled draws. std:: distributions are
// implementation-defined, which would break byte-identical outputs across
// toolchains; the engine itself is fully specified by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(eng_() % static_cast<uint64_t>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; caches the second deviate.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

}  // namespace sddkit
