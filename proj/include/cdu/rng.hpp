#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace cdu {

/// Seeded random source with portable output.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard. The
/// distributions are written out here because the <random> distribution
/// classes are implementation-defined, and every artifact this library writes
/// (splits, checkpoints, reports) must be reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal (Box-Muller, pairs cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double rademacher() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent seed for sub-stream `stream` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace cdu
