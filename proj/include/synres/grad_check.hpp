#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "synres/autograd.hpp"

namespace synres {

// A scalar-valued function of graph inputs, returning a 1x1 node.
template <class T>
using ScalarFn = std::function<Var<T>(Graph<T>&, std::span<const Var<T>>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;  // at the worst element
  double numeric = 0.0;
};

// Compares backward() against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every input.
// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
template <class T>
GradCheckResult grad_check(const ScalarFn<T>& fn, const std::vector<Tensor2<T>>& inputs, T eps);

// Same comparison, but the finite-difference side runs at 64-bit on the
// float inputs widened exactly, so the 32-bit backward pass is measured
// against a reference that is not itself dominated by 32-bit rounding.
GradCheckResult grad_check_mixed(const ScalarFn<float>& fn32, const ScalarFn<double>& fn64,
                                 const std::vector<Tensor2<float>>& inputs, double eps);

double relative_error(double analytic, double numeric);

}  // namespace synres
