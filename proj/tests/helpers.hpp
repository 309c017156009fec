#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "synres/rng.hpp"
#include "synres/tensor.hpp"

namespace synres::testing {

template <class T>
Tensor2<T> random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double sigma = 1.0) {
  Rng rng(seed);
  return randn<T>(rows, cols, sigma, rng);
}

inline std::vector<std::int32_t> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int32_t> out(n);
  for (auto& t : out) t = static_cast<std::int32_t>(rng.below(vocab));
  return out;
}

template <class T>
double max_abs_diff(const Tensor2<T>& a, const Tensor2<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double(a.values()[i]) - double(b.values()[i])));
  }
  return m;
}

}  // namespace synres::testing
