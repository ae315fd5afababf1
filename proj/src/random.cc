#include "swaplab/random.h"

#include <cmath>

namespace swaplab {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t derive_seed(uint64_t base, std::string_view name, uint64_t index) {
  return splitmix64(splitmix64(base ^ fnv1a64(name)) + index);
}

uint64_t Rng::uniform_index(uint64_t n) {
  // Rejection on the top of the range keeps every residue equally likely.
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::laplace(double scale) {
  double u = uniform_open() - 0.5;
  double magnitude = -scale * std::log1p(-2.0 * std::fabs(u));
  return u < 0 ? -magnitude : magnitude;
}

size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  double acc = 0.0;
  size_t last_positive = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace swaplab
