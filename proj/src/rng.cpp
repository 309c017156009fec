#include "synres/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace synres {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  const double u1 = uniform_pos();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <class T>
Tensor2<T> randn(std::size_t rows, std::size_t cols, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("randn: sigma must be non-negative");
  Tensor2<T> out(rows, cols);
  if (sigma == 0.0) return out;
  for (T& v : out.values()) v = static_cast<T>(sigma * rng.normal());
  return out;
}

template Tensor2<float> randn(std::size_t, std::size_t, double, Rng&);
template Tensor2<double> randn(std::size_t, std::size_t, double, Rng&);

Rng Rng::split(std::uint64_t tag) const { return Rng(mix64(seed_ ^ mix64(tag + kGolden)), 0); }

}  // namespace synres
