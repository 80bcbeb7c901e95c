#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace trajgeom {

/// Deterministic random source.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// implements bounded draws itself, because the standard distributions are
/// implementation-defined and would break byte-identical suites across
/// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). Unbiased (rejection on the top range).
  std::size_t index(std::size_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  template <typename T>
  const T& pick(std::span<const T> items) {
    return items[index(items.size())];
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

 private:
  std::mt19937_64 engine_;
};

/// Seed splitting rule for parallel generation: child i of a root seed is
/// splitmix64(root + (i + 1) * 0x9E3779B97F4A7C15).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace trajgeom
