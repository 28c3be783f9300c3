#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dualran {

/// Deterministic random source.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The real-valued draws are derived here rather than through
/// <random> distributions (those are implementation-defined), so the same seed
/// yields the same values on every platform and standard library:
///   uniform(): top 53 bits scaled into [0, 1)
///   normal():  Box-Muller on two uniforms, no cached second value
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, n). Unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

  /// Child generator with a seed derived from this one's seed and `stream`.
  /// Does not advance this generator.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finaliser, used to derive well-spread seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace dualran
