#ifndef SWAPLAB_RANDOM_H_
#define SWAPLAB_RANDOM_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace swaplab {

// SplitMix64 finalizer. Used for seed derivation only.
uint64_t splitmix64(uint64_t x);

// FNV-1a over the bytes of |s|.
uint64_t fnv1a64(std::string_view s);

// Stable seed derivation for (base seed, stream name, index):
//   splitmix64(splitmix64(base ^ fnv1a64(name)) + index)
// The formula is part of the output contract; changing it changes every
// report produced from a given config.
uint64_t derive_seed(uint64_t base, std::string_view name, uint64_t index);

// Independent sub-stream of |seed| for a named purpose inside one algorithm.
inline uint64_t substream(uint64_t seed, std::string_view tag) {
  return derive_seed(seed, tag, 0);
}

// Random source with distribution code that is identical on every platform.
// The standard library distributions are implementation-defined, so only the
// engine is borrowed from <random>.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Unbiased uniform integer on [0, n). n must be positive.
  uint64_t uniform_index(uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Laplace(0, scale) by inversion.
  double laplace(double scale);

  // Index drawn with probability proportional to |weights|.
  size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace swaplab

#endif  // SWAPLAB_RANDOM_H_
