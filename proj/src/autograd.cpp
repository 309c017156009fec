#include "synres/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace synres {

namespace {

template <class T>
void require_same_shape(const Tensor2<T>& a, const Tensor2<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

template <class T>
Tensor2<T> scalar(T v) {
  return Tensor2<T>(1, 1, v);
}

}  // namespace

// ---- Graph -------------------------------------------------------------------

template <class T>
Var<T> Graph<T>::leaf(Tensor2<T> value) {
  require_finite(value, "leaf");
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Graph<T>::constant(Tensor2<T> value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Graph<T>::record(Tensor2<T> value, std::initializer_list<Var<T>> parents,
                        BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (&p.graph() != this) throw std::logic_error("Graph::record: operand from another graph");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Tensor2<T>& Graph<T>::accum(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor2<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
  if (&loss.graph() != this) throw std::logic_error("backward: root from another graph");
  const auto& root = nodes_[loss.id()].value;
  if (root.rows() != 1 || root.cols() != 1) {
    throw DimensionError("backward: root must be a scalar, got " + root.shape());
  }
  for (auto& n : nodes_) n.grad = Tensor2<T>();
  accum(loss.id())[0] = T(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

template <class T>
Tensor2<T> Graph<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor2<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---- kernels -------------------------------------------------------------------

template <class T>
void gemm_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * kk;
    for (std::size_t k = 0; k < kk; ++k) {
      const T aik = arow[k];
      const T* brow = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c += a^T * g, summing over rows of a in ascending order.
template <class T>
void gemm_tn_acc(const Tensor2<T>& a, const Tensor2<T>& g, Tensor2<T>& c) {
  const std::size_t m = a.rows(), kk = a.cols(), n = g.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * kk;
    const T* grow = g.data() + i * n;
    for (std::size_t k = 0; k < kk; ++k) {
      const T aik = arow[k];
      T* crow = c.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * grow[j];
    }
  }
}

template <class T>
Tensor2<T> transpose(const Tensor2<T>& a) {
  Tensor2<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <class T>
void softmax_inplace(std::span<T> row) {
  T mx = row[0];
  for (T v : row) mx = std::max(mx, v);
  T total = 0;
  for (T& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  for (T& v : row) v /= total;
}

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

namespace {
template <class T>
constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2 / pi)
template <class T>
constexpr T kGeluA = T(0.044715);
}  // namespace

template <class T>
T gelu_scalar(T x) {
  const T u = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

// ---- ops -------------------------------------------------------------------------

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + av.shape() + " x " + bv.shape());
  }
  Tensor2<T> out(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  require_finite(out, "matmul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    if (g.requires_grad(ia)) gemm_acc(up, transpose(g.value(ib)), g.accum(ia));
    if (g.requires_grad(ib)) gemm_tn_acc(g.value(ia), up, g.accum(ib));
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor2<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  require_finite(out, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    for (std::size_t id : {ia, ib}) {
      if (!g.requires_grad(id)) continue;
      auto& acc = g.accum(id);
      for (std::size_t i = 0; i < up.size(); ++i) acc[i] += up[i];
    }
  });
}

template <class T>
Var<T> add_row(Var<T> a, Var<T> row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: expected [1x" + std::to_string(av.cols()) + "] row, got " +
                         rv.shape());
  }
  Tensor2<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  require_finite(out, "add_row");
  const std::size_t ia = a.id(), ir = row.id();
  return a.graph().record(std::move(out), {a, row}, [ia, ir](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    if (g.requires_grad(ia)) {
      auto& acc = g.accum(ia);
      for (std::size_t i = 0; i < up.size(); ++i) acc[i] += up[i];
    }
    if (g.requires_grad(ir)) {
      auto& acc = g.accum(ir);
      for (std::size_t i = 0; i < up.rows(); ++i)
        for (std::size_t j = 0; j < up.cols(); ++j) acc[j] += up(i, j);
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor2<T> out = a.value();
  for (T& v : out.values()) v *= s;
  require_finite(out, "scale");
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, s](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    auto& acc = g.accum(ia);
    for (std::size_t i = 0; i < up.size(); ++i) acc[i] += up[i] * s;
  });
}

template <class T>
Var<T> hadamard(Var<T> x, Var<T> y) {
  require_same_shape(x.value(), y.value(), "hadamard");
  Tensor2<T> out = x.value();
  const auto& yv = y.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= yv[i];
  require_finite(out, "hadamard");
  const std::size_t ix = x.id(), iy = y.id();
  return x.graph().record(std::move(out), {x, y}, [ix, iy](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    if (g.requires_grad(ix)) {
      auto& acc = g.accum(ix);
      const auto& yv = g.value(iy);
      for (std::size_t i = 0; i < up.size(); ++i) acc[i] += up[i] * yv[i];
    }
    if (g.requires_grad(iy)) {
      auto& acc = g.accum(iy);
      const auto& xv = g.value(ix);
      for (std::size_t i = 0; i < up.size(); ++i) acc[i] += up[i] * xv[i];
    }
  });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  require_finite(x.value(), "sigmoid");
  Tensor2<T> out = x.value();
  for (T& v : out.values()) v = sigmoid_scalar(v);
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    const auto& s = g.value(self);
    auto& acc = g.accum(ix);
    for (std::size_t i = 0; i < up.size(); ++i) acc[i] += up[i] * s[i] * (T(1) - s[i]);
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  Tensor2<T> out = x.value();
  for (T& v : out.values()) v = gelu_scalar(v);
  require_finite(out, "gelu");
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    const auto& xv = g.value(ix);
    auto& acc = g.accum(ix);
    for (std::size_t i = 0; i < up.size(); ++i) {
      const T x1 = xv[i];
      const T u = kGeluC<T> * (x1 + kGeluA<T> * x1 * x1 * x1);
      const T th = std::tanh(u);
      const T du = kGeluC<T> * (T(1) + T(3) * kGeluA<T> * x1 * x1);
      acc[i] += up[i] * (T(0.5) * (T(1) + th) + T(0.5) * x1 * (T(1) - th * th) * du);
    }
  });
}

template <class T>
Var<T> softmax_rows(Var<T> x) {
  require_finite(x.value(), "softmax_rows");
  Tensor2<T> out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    const auto& p = g.value(self);
    auto& acc = g.accum(ix);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < p.cols(); ++c) dot += up(r, c) * p(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) acc(r, c) += p(r, c) * (up(r, c) - dot);
    }
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const auto& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (d == 0) throw DimensionError("layer_norm: zero width");
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw DimensionError("layer_norm: gain/bias must be [1x" + std::to_string(d) + "]");
  }
  Tensor2<T> xhat(n, d);
  std::vector<T> rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
    mean /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= T(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) xhat(r, c) = (xv(r, c) - mean) * rstd[r];
  }
  Tensor2<T> out(n, d);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
  require_finite(out, "layer_norm");
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, std::size_t self) {
        const auto& up = g.upstream(self);
        const std::size_t n = up.rows(), d = up.cols();
        if (g.requires_grad(ig)) {
          auto& acc = g.accum(ig);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) acc[c] += up(r, c) * xhat(r, c);
        }
        if (g.requires_grad(ib)) {
          auto& acc = g.accum(ib);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) acc[c] += up(r, c);
        }
        if (g.requires_grad(ix)) {
          const auto& gv = g.value(ig);
          auto& acc = g.accum(ix);
          std::vector<T> dxhat(d);
          for (std::size_t r = 0; r < n; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < d; ++c) {
              dxhat[c] = up(r, c) * gv[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat(r, c);
            }
            mean_d /= T(d);
            mean_dx /= T(d);
            for (std::size_t c = 0; c < d; ++c)
              acc(r, c) += rstd[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
          }
        }
      });
}

template <class T>
Var<T> frobenius_sq(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += v * v;
  Tensor2<T> out = scalar(total);
  require_finite(out, "frobenius_sq");
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph<T>& g, std::size_t self) {
    const T up = g.upstream(self)[0];
    const auto& xv = g.value(ix);
    auto& acc = g.accum(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) acc[i] += T(2) * xv[i] * up;
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  Tensor2<T> out = scalar(total);
  require_finite(out, "sum");
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph<T>& g, std::size_t self) {
    const T up = g.upstream(self)[0];
    for (T& v : g.accum(ix).values()) v += up;
  });
}

template <class T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> indices) {
  const auto& tv = table.value();
  Tensor2<T> out(indices.size(), tv.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto idx = indices[r];
    if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(idx) + " outside [0, " +
                           std::to_string(tv.rows()) + ")");
    }
    std::copy_n(tv.row(static_cast<std::size_t>(idx)).begin(), tv.cols(), out.row(r).begin());
  }
  const std::size_t it = table.id();
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return table.graph().record(
      std::move(out), {table}, [it, idx = std::move(idx)](Graph<T>& g, std::size_t self) {
        const auto& up = g.upstream(self);
        auto& acc = g.accum(it);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          auto dst = acc.row(static_cast<std::size_t>(idx[r]));
          auto src = up.row(r);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
      });
}

template <class T>
Var<T> cross_entropy_logits(Var<T> logits, std::span<const std::int32_t> targets,
                            std::span<const std::uint8_t> mask) {
  const auto& lv = logits.value();
  const std::size_t n = lv.rows(), vocab = lv.cols();
  if (targets.size() != n || mask.size() != n) {
    throw DimensionError("cross_entropy_logits: targets/mask length must equal " +
                         std::to_string(n) + " rows");
  }
  require_finite(lv, "cross_entropy_logits");
  std::size_t count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    ++count;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw DimensionError("cross_entropy_logits: target " + std::to_string(targets[r]) +
                           " outside vocabulary of " + std::to_string(vocab));
    }
  }
  if (count == 0) throw DimensionError("cross_entropy_logits: mask selects no position");

  Tensor2<T> probs(n, vocab);
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    auto row = lv.row(r);
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T z = 0;
    for (T v : row) z += std::exp(v - mx);
    const T lse = mx + std::log(z);
    total += lse - row[static_cast<std::size_t>(targets[r])];
    for (std::size_t c = 0; c < vocab; ++c) probs(r, c) = std::exp(row[c] - lse);
  }
  Tensor2<T> out = scalar(total / T(count));
  require_finite(out, "cross_entropy_logits");
  const std::size_t il = logits.id();
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return logits.graph().record(
      std::move(out), {logits},
      [il, count, probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk)](
          Graph<T>& g, std::size_t self) {
        const T up = g.upstream(self)[0] / T(count);
        auto& acc = g.accum(il);
        for (std::size_t r = 0; r < msk.size(); ++r) {
          if (!msk[r]) continue;
          for (std::size_t c = 0; c < probs.cols(); ++c) acc(r, c) += up * probs(r, c);
          acc(r, static_cast<std::size_t>(tgt[r])) -= up;
        }
      });
}

template <class T>
Var<T> multihead_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, std::size_t seq_len,
                           bool causal) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  require_same_shape(qv, kv, "multihead_attention");
  require_same_shape(qv, vv, "multihead_attention");
  const std::size_t rows = qv.rows(), d = qv.cols();
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("multihead_attention: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
  }
  if (seq_len == 0 || rows % seq_len != 0) {
    throw DimensionError("multihead_attention: " + std::to_string(rows) +
                         " rows are not a whole number of sequences of length " +
                         std::to_string(seq_len));
  }
  const std::size_t dh = d / heads;
  const std::size_t nseq = rows / seq_len;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));

  // probs[(s * heads + h)] is the [seq_len x seq_len] attention matrix.
  std::vector<Tensor2<T>> probs(nseq * heads);
  Tensor2<T> out(rows, d);
  std::vector<T> score(seq_len);
  for (std::size_t s = 0; s < nseq; ++s) {
    const std::size_t base = s * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      Tensor2<T> p(seq_len, seq_len);
      for (std::size_t t = 0; t < seq_len; ++t) {
        const std::size_t span_len = causal ? t + 1 : seq_len;
        const T* qrow = qv.data() + (base + t) * d + c0;
        for (std::size_t u = 0; u < span_len; ++u) {
          const T* krow = kv.data() + (base + u) * d + c0;
          T dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += qrow[c] * krow[c];
          score[u] = dot * inv_sqrt;
        }
        softmax_inplace(std::span<T>(score.data(), span_len));
        T* orow = out.data() + (base + t) * d + c0;
        for (std::size_t u = 0; u < span_len; ++u) {
          p(t, u) = score[u];
          const T* vrow = vv.data() + (base + u) * d + c0;
          for (std::size_t c = 0; c < dh; ++c) orow[c] += score[u] * vrow[c];
        }
      }
      probs[s * heads + h] = std::move(p);
    }
  }
  require_finite(out, "multihead_attention");

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  auto backward = [iq, ik, iv, heads, seq_len, causal, dh, nseq, inv_sqrt,
                   probs = std::move(probs)](Graph<T>& g, std::size_t self) {
    const auto& up = g.upstream(self);
    const auto& qv = g.value(iq);
    const auto& kv = g.value(ik);
    const auto& vv = g.value(iv);
    const std::size_t d = qv.cols();
    Tensor2<T>& dq = g.accum(iq);
    Tensor2<T>& dk = g.accum(ik);
    Tensor2<T>& dv = g.accum(iv);
    std::vector<T> dp(seq_len);
    for (std::size_t s = 0; s < nseq; ++s) {
      const std::size_t base = s * seq_len;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dh;
        const Tensor2<T>& p = probs[s * heads + h];
        for (std::size_t t = 0; t < seq_len; ++t) {
          const std::size_t span_len = causal ? t + 1 : seq_len;
          const T* gout = up.data() + (base + t) * d + c0;
          // dP = dOut . V^T ; dV += P^T . dOut
          T rowdot = 0;
          for (std::size_t u = 0; u < span_len; ++u) {
            const T* vrow = vv.data() + (base + u) * d + c0;
            T* dvrow = dv.data() + (base + u) * d + c0;
            T acc = 0;
            for (std::size_t c = 0; c < dh; ++c) {
              acc += gout[c] * vrow[c];
              dvrow[c] += p(t, u) * gout[c];
            }
            dp[u] = acc;
            rowdot += acc * p(t, u);
          }
          // dS = P * (dP - <dP, P>), then through the scaled dot product.
          const T* qrow = qv.data() + (base + t) * d + c0;
          T* dqrow = dq.data() + (base + t) * d + c0;
          for (std::size_t u = 0; u < span_len; ++u) {
            const T ds = p(t, u) * (dp[u] - rowdot) * inv_sqrt;
            const T* krow = kv.data() + (base + u) * d + c0;
            T* dkrow = dk.data() + (base + u) * d + c0;
            for (std::size_t c = 0; c < dh; ++c) {
              dqrow[c] += ds * krow[c];
              dkrow[c] += ds * qrow[c];
            }
          }
        }
      }
    }
  };
  return q.graph().record(std::move(out), {q, k, v}, std::move(backward));
}

#define SYNRES_INSTANTIATE(T)                                                                  \
  template class Graph<T>;                                                                     \
  template Var<T> matmul(Var<T>, Var<T>);                                                      \
  template Var<T> add(Var<T>, Var<T>);                                                         \
  template Var<T> add_row(Var<T>, Var<T>);                                                     \
  template Var<T> scale(Var<T>, T);                                                            \
  template Var<T> hadamard(Var<T>, Var<T>);                                                    \
  template Var<T> sigmoid(Var<T>);                                                             \
  template Var<T> gelu(Var<T>);                                                                \
  template Var<T> softmax_rows(Var<T>);                                                        \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                       \
  template Var<T> frobenius_sq(Var<T>);                                                        \
  template Var<T> sum(Var<T>);                                                                 \
  template Var<T> gather_rows(Var<T>, std::span<const std::int32_t>);                          \
  template Var<T> cross_entropy_logits(Var<T>, std::span<const std::int32_t>,                  \
                                       std::span<const std::uint8_t>);                         \
  template Var<T> multihead_attention(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t, bool); \
  template void gemm_acc(const Tensor2<T>&, const Tensor2<T>&, Tensor2<T>&);                   \
  template Tensor2<T> transpose(const Tensor2<T>&);                                            \
  template void softmax_inplace(std::span<T>);                                                 \
  template T sigmoid_scalar(T);                                                                \
  template T gelu_scalar(T);

SYNRES_INSTANTIATE(float)
SYNRES_INSTANTIATE(double)

}  // namespace synres
