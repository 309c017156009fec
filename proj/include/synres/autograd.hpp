#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "synres/tensor.hpp"

namespace synres {

template <class T>
class Graph;

// Handle to a node on a Graph. Cheap to copy; valid while the graph lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor2<T>& value() const { return graph_->value(id_); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of executed operations. Nodes are appended in execution order, so the
// node index is a topological order and backward is a reverse index sweep.
// A graph is single-writer; use one graph per thread.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Differentiable input. Receives a gradient on backward (zero if unreachable).
  Var<T> leaf(Tensor2<T> value);
  // Non-differentiable input.
  Var<T> constant(Tensor2<T> value);

  // Appends an operation result. `backward` is dropped when no parent
  // requires a gradient.
  Var<T> record(Tensor2<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward);

  const Tensor2<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var<T> v) const { return requires_grad(v.id()); }

  // Upstream gradient of a node during backward; empty if never reached.
  const Tensor2<T>& upstream(std::size_t id) const { return nodes_[id].grad; }
  // Gradient accumulator of a node, zero-allocated on first use.
  Tensor2<T>& accum(std::size_t id);

  // Reverse sweep from a 1x1 root. Clears any earlier gradients first.
  void backward(Var<T> loss);

  // Gradient of `v` after backward; exact zeros if `v` was not reached.
  Tensor2<T> grad(Var<T> v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor2<T> value;
    Tensor2<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // deque: value references stay valid as nodes are appended
};

// ---- differentiable operations ---------------------------------------------
// Every op throws DimensionError on shape mismatch and NumericError when the
// result is not finite.

template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> add(Var<T> a, Var<T> b);
// a [n x d] + row [1 x d] broadcast over rows.
template <class T> Var<T> add_row(Var<T> a, Var<T> row);
template <class T> Var<T> scale(Var<T> a, T s);
template <class T> Var<T> hadamard(Var<T> x, Var<T> y);
template <class T> Var<T> sigmoid(Var<T> x);
// Tanh-approximated GELU.
template <class T> Var<T> gelu(Var<T> x);
template <class T> Var<T> softmax_rows(Var<T> x);
template <class T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
// Sum of squared elements, as a 1x1 node.
template <class T> Var<T> frobenius_sq(Var<T> x);
template <class T> Var<T> sum(Var<T> x);
// Gathers rows of `table` by index.
template <class T> Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> indices);
// Mean over unmasked rows of -log softmax(logits)[target]; 1x1.
template <class T>
Var<T> cross_entropy_logits(Var<T> logits, std::span<const std::int32_t> targets,
                            std::span<const std::uint8_t> mask);

// Multi-head scaled dot-product attention. Rows of q/k/v are consecutive
// sequences of `seq_len` tokens each; attention never crosses a sequence
// boundary. Scores are scaled by 1/sqrt(d / heads). With `causal`, row t only
// attends to rows 0..t of its own sequence. Output is the per-head results
// concatenated along columns, before any output projection.
template <class T>
Var<T> multihead_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, std::size_t seq_len,
                           bool causal);

// ---- plain kernels (no graph) ------------------------------------------------

// c += a * b, summing k in ascending order for every output element.
template <class T>
void gemm_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c);
template <class T> Tensor2<T> transpose(const Tensor2<T>& a);
// Stable in-place softmax of one row (row maximum subtracted first).
template <class T> void softmax_inplace(std::span<T> row);
template <class T> T sigmoid_scalar(T x);
template <class T> T gelu_scalar(T x);

}  // namespace synres
