#include "synres/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace synres {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

template <class T>
std::vector<Tensor2<T>> analytic_grads(const ScalarFn<T>& fn, const std::vector<Tensor2<T>>& inputs) {
  Graph<T> g;
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.leaf(t));
  Var<T> loss = fn(g, vars);
  g.backward(loss);
  std::vector<Tensor2<T>> grads;
  grads.reserve(vars.size());
  for (const auto& v : vars) grads.push_back(g.grad(v));
  return grads;
}

template <class T>
T evaluate(const ScalarFn<T>& fn, const std::vector<Tensor2<T>>& inputs) {
  Graph<T> g;
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  return fn(g, vars).value()[0];
}

// Walks every element, calling numeric(i, j) and comparing with grads[i][j].
template <class G, class Numeric>
GradCheckResult compare(const std::vector<Tensor2<G>>& grads, Numeric&& numeric) {
  GradCheckResult res;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      const double a = static_cast<double>(grads[i][j]);
      const double n = numeric(i, j);
      const double err = relative_error(a, n);
      if (err > res.max_rel_error) res = {err, i, j, a, n};
    }
  }
  return res;
}

}  // namespace

template <class T>
GradCheckResult grad_check(const ScalarFn<T>& fn, const std::vector<Tensor2<T>>& inputs, T eps) {
  const auto grads = analytic_grads(fn, inputs);
  auto work = inputs;
  return compare(grads, [&](std::size_t i, std::size_t j) {
    const T orig = work[i][j];
    work[i][j] = orig + eps;
    const T up = evaluate(fn, work);
    work[i][j] = orig - eps;
    const T down = evaluate(fn, work);
    work[i][j] = orig;
    return (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * static_cast<double>(eps));
  });
}

GradCheckResult grad_check_mixed(const ScalarFn<float>& fn32, const ScalarFn<double>& fn64,
                                 const std::vector<Tensor2<float>>& inputs, double eps) {
  const auto grads = analytic_grads(fn32, inputs);
  std::vector<Tensor2<double>> work;
  work.reserve(inputs.size());
  for (const auto& t : inputs) work.push_back(t.cast<double>());
  return compare(grads, [&](std::size_t i, std::size_t j) {
    const double orig = work[i][j];
    work[i][j] = orig + eps;
    const double up = evaluate(fn64, work);
    work[i][j] = orig - eps;
    const double down = evaluate(fn64, work);
    work[i][j] = orig;
    return (up - down) / (2.0 * eps);
  });
}

template GradCheckResult grad_check(const ScalarFn<float>&, const std::vector<Tensor2<float>>&, float);
template GradCheckResult grad_check(const ScalarFn<double>&, const std::vector<Tensor2<double>>&,
                                    double);

}  // namespace synres
