#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "eal/tensor.hpp"

namespace eal {

// mt19937_64 with distribution code written out here so draws are identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a over the label mixed with the root seed, finished with splitmix64.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);
std::uint64_t fnv1a64(std::string_view bytes);

// Trainable leaf filled uniformly in [-bound, bound].
Tensor uniform_param(Shape shape, double bound, Rng& rng);

}  // namespace eal
