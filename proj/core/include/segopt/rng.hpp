#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace segopt {

/// Counter-based SplitMix64 generator.
///
/// Draw `k` is a pure function of (seed, k), so sequences replay bit-exactly on
/// any platform. Normals use Box-Muller on top of `uniform()` for the same
/// reason; std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t counter) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). `n` must be positive.
  std::size_t below(std::size_t n) noexcept;
  double normal() noexcept;

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  /// Independent generator derived from this one's seed and a stream id.
  Rng fork(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace segopt
