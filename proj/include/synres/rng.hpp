#pragma once

#include <cstddef>
#include <cstdint>

#include "synres/tensor.hpp"

namespace synres {

// Counter-based generator: the n-th draw is splitmix64(seed + n * golden).
// The whole state is (seed, counter), so streams are reproducible across
// platforms and trivially serialisable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (cosine branch only, no cached state).
  double normal();

  // Independent child stream keyed by `tag`; does not advance this stream.
  Rng split(std::uint64_t tag) const;

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

// I.i.d. N(0, sigma^2) draws in row-major order. Throws std::invalid_argument
// for negative sigma.
template <class T>
Tensor2<T> randn(std::size_t rows, std::size_t cols, double sigma, Rng& rng);

}  // namespace synres
