#include "dadg/rng.hpp"

#include <cmath>
#include <numbers>

namespace dadg {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) return 0;
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform01();
  double u2 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::shuffle(std::vector<int>& v) { shuffle_items(v); }

uint64_t Rng::derive_seed(uint64_t seed, std::string_view tag) {
  return splitmix64(seed ^ fnv1a(tag));
}

Rng Rng::stream(uint64_t seed, std::string_view tag) { return Rng(derive_seed(seed, tag)); }

}  // namespace dadg
