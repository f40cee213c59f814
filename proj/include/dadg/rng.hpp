#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dadg {

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the distribution transforms here are hand-rolled because the std::*_distribution
// classes are implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() { return double(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller. Draws two uniforms per call; no spare cached
  // so the call sequence alone determines the stream.
  double normal();

  void shuffle(std::vector<int>& v);
  template <typename T>
  void shuffle_items(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int(i)]);
  }

  // Independent named substream of a master seed.
  static Rng stream(uint64_t seed, std::string_view tag);
  static uint64_t derive_seed(uint64_t seed, std::string_view tag);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dadg
