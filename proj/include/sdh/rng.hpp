#pragma once

#include <cstdint>
#include <vector>

namespace sdh {

// Deterministic random source. All distributions are implemented explicitly
// (not via std::*_distribution) so that streams are identical across
// standard libraries and compilers for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed) {
    // splitmix64 warmup so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n);

  // standard normal via Box-Muller
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates, fixed order
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // named sub-stream derivation, order-independent
  Rng fork(uint64_t stream) const {
    uint64_t mixed = state_ ^ (0x2545f4914f6cdd1dull * (stream + 1));
    return Rng(mixed);
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stateless counter-based hash; used where parallel generation must not
// depend on evaluation order (dropout masks, per-study seeds).
inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// uniform in [0,1) from a hash of (seed, index)
inline double hash_uniform(uint64_t seed, uint64_t index) {
  return static_cast<double>(hash_mix(seed, index) >> 11) * 0x1.0p-53;
}

}  // namespace sdh
