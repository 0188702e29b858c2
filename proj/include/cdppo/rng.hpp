#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cdppo {

/// Counter-based generator: the i-th draw is a SplitMix64 finalizer applied to
/// key + (i+1)*golden. Streams split by hashing a tag into a fresh key, so the
/// sequence depends only on (seed, split path, draw index) and is identical on
/// every platform. Not thread-safe; give each worker its own split.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal();
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  SeededRng split(std::uint64_t tag) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  SeededRng(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace cdppo
