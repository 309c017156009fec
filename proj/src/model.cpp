#include "synres/model.hpp"

#include <stdexcept>

namespace synres {

std::string_view to_string(GateMode mode) {
  switch (mode) {
    case GateMode::learned:
      return "learned";
    case GateMode::forced_ones:
      return "forced_ones";
    case GateMode::disabled:
      return "disabled";
  }
  return "unknown";
}

GateMode parse_gate_mode(std::string_view text) {
  if (text == "learned") return GateMode::learned;
  if (text == "forced_ones") return GateMode::forced_ones;
  if (text == "disabled") return GateMode::disabled;
  throw std::invalid_argument("unknown gate mode '" + std::string(text) +
                              "' (expected learned, forced_ones or disabled)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model.") + name + " must be >= 1");
  };
  positive(vocab_size, "vocab_size");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_layers, "n_layers");
  positive(d_ff, "d_ff");
  if (max_seq_len < 2) throw std::invalid_argument("model.max_seq_len must be >= 2");
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model.d_model (" + std::to_string(d_model) +
                                ") must be divisible by model.n_heads (" +
                                std::to_string(n_heads) + ")");
  }
  if (!(sigma_init >= 0.0)) throw std::invalid_argument("model.sigma_init must be >= 0");
}

template <class T>
Params<T> zero_params(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  Params<T> p;
  p.tok_emb = Tensor2<T>(c.vocab_size, d);
  p.pos_emb = Tensor2<T>(c.max_seq_len, d);
  p.layers.resize(c.n_layers);
  for (auto& l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Tensor2<T>(d, d);
    l.w1 = Tensor2<T>(d, c.d_ff);
    l.b1 = Tensor2<T>(1, c.d_ff);
    l.w2 = Tensor2<T>(c.d_ff, d);
    l.b2 = Tensor2<T>(1, d);
    l.ln1_gain = l.ln1_bias = l.ln2_gain = l.ln2_bias = Tensor2<T>(1, d);
    l.ws = Tensor2<T>(d, d);
  }
  p.lnf_gain = p.lnf_bias = Tensor2<T>(1, d);
  p.unembed = Tensor2<T>(d, c.vocab_size);
  return p;
}

std::size_t parameter_census(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t per_layer = 4 * d * d            // attention projections
                                + 2 * d * c.d_ff      // FFN matrices
                                + c.d_ff + d          // FFN biases
                                + 4 * d               // two layer norms
                                + d * d;              // synaptic matrix
  return c.vocab_size * d + c.max_seq_len * d + c.n_layers * per_layer + 2 * d + d * c.vocab_size;
}

template <class T>
std::size_t parameter_count(const Params<T>& params) {
  std::size_t n = 0;
  params.for_each([&](const std::string&, const Tensor2<T>& t) { n += t.size(); });
  return n;
}

namespace {
bool is_bias(const std::string& name) {
  return name.ends_with("_bias") || name.ends_with(".b1") || name.ends_with(".b2");
}
}  // namespace

template <class T>
Params<T> init_params(const ModelConfig& config, const Rng& rng) {
  Params<T> p = zero_params<T>(config);
  constexpr double kStd = 0.02;
  std::uint64_t tag = 0;
  p.for_each([&](const std::string& name, Tensor2<T>& t) {
    Rng stream = rng.split(tag++);
    if (name.ends_with("_gain")) {
      t.fill(T(1));
    } else if (is_bias(name)) {
      t.fill(T(0));
    } else {
      const double sigma = name.ends_with(".ws") ? config.sigma_init : kStd;
      t = randn<T>(t.rows(), t.cols(), sigma, stream);
    }
  });
  return p;
}

template <class T>
ParamVars<T> bind(Graph<T>& graph, const Params<T>& params, bool trainable) {
  ParamVars<T> vars;
  vars.layers.resize(params.layers.size());
  // Walk both structures in lockstep through their shared visiting order.
  std::vector<Var<T>> flat;
  params.for_each([&](const std::string&, const Tensor2<T>& t) {
    flat.push_back(trainable ? graph.leaf(t) : graph.constant(t));
  });
  std::size_t i = 0;
  vars.for_each([&](const std::string&, Var<T>& v) { v = flat[i++]; });
  return vars;
}

template <class T>
AttentionOutput<T> attention_block(Var<T> x, const LayerSlots<Var<T>>& layer,
                                   const AttentionParts& parts) {
  AttentionOutput<T> out;
  out.q = matmul(x, layer.wq);
  out.k = matmul(x, layer.wk);
  out.v = matmul(x, layer.wv);
  Var<T> heads = multihead_attention(out.q, out.k, out.v, parts.heads, parts.seq_len, parts.causal);
  out.a = matmul(heads, layer.wo);
  return out;
}

template <class T>
GateOutput<T> resonance_gate(Var<T> a, Var<T> ws, GateMode mode) {
  switch (mode) {
    case GateMode::learned: {
      if (ws.rows() != a.cols() || ws.cols() != a.cols()) {
        throw DimensionError("resonance_gate: W_s " + ws.value().shape() +
                             " does not match attention width " + std::to_string(a.cols()));
      }
      Var<T> r = sigmoid(matmul(a, ws));
      return {r, hadamard(a, r)};
    }
    case GateMode::forced_ones:
      return {a.graph().constant(Tensor2<T>(a.rows(), a.cols(), T(1))), a};
    case GateMode::disabled:
      return {Var<T>{}, a};
  }
  throw std::logic_error("resonance_gate: bad mode");
}

template <class T>
Var<T> forward_graph(Graph<T>& graph, const ModelConfig& config, const ParamVars<T>& vars,
                     std::span<const std::int32_t> tokens, std::size_t seq_len, GateMode mode,
                     ActivationTrace<T>* trace) {
  if (&vars.tok_emb.graph() != &graph) {
    throw std::logic_error("forward: parameters are bound to a different graph");
  }
  if (seq_len == 0 || tokens.size() % seq_len != 0) {
    throw DimensionError("forward: token count is not a multiple of the sequence length");
  }
  if (seq_len > config.max_seq_len) {
    throw DimensionError("forward: sequence length " + std::to_string(seq_len) +
                         " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  for (auto t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size) {
      throw DimensionError("forward: token index " + std::to_string(t) + " outside vocabulary of " +
                           std::to_string(config.vocab_size));
    }
  }
  std::vector<std::int32_t> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<std::int32_t>(i % seq_len);
  }

  Var<T> h = add(gather_rows(vars.tok_emb, tokens), gather_rows(vars.pos_emb, std::span<const std::int32_t>(positions)));
  const AttentionParts parts{config.n_heads, seq_len, true};
  if (trace) trace->layers.clear();
  for (const auto& layer : vars.layers) {
    Var<T> xn = layer_norm(h, layer.ln1_gain, layer.ln1_bias);
    AttentionOutput<T> att = attention_block(xn, layer, parts);
    GateOutput<T> gate = resonance_gate(att.a, layer.ws, mode);
    h = add(h, gate.o);
    Var<T> xn2 = layer_norm(h, layer.ln2_gain, layer.ln2_bias);
    Var<T> ff = add_row(matmul(gelu(add_row(matmul(xn2, layer.w1), layer.b1)), layer.w2), layer.b2);
    h = add(h, ff);
    if (trace) {
      trace->layers.push_back({att.q.value(), att.k.value(), att.v.value(), att.a.value(),
                               gate.r.valid() ? gate.r.value() : Tensor2<T>(), gate.o.value()});
    }
  }
  h = layer_norm(h, vars.lnf_gain, vars.lnf_bias);
  return matmul(h, vars.unembed);
}

template <class T>
ForwardResult<T> forward(const ModelConfig& config, const Params<T>& params,
                         std::span<const std::int32_t> tokens, GateMode mode, bool want_trace) {
  Graph<T> graph;
  const ParamVars<T> vars = bind(graph, params, false);
  ForwardResult<T> result;
  ActivationTrace<T> trace;
  result.logits = forward_graph(graph, config, vars, tokens, tokens.size(), mode,
                                want_trace ? &trace : nullptr).value();
  if (want_trace) result.trace = std::move(trace);
  return result;
}

template <class T>
Tensor2<T> forward_batch(const ModelConfig& config, const Params<T>& params,
                         std::span<const std::int32_t> tokens, std::size_t seq_len, GateMode mode) {
  Graph<T> graph;
  const ParamVars<T> vars = bind(graph, params, false);
  return forward_graph(graph, config, vars, tokens, seq_len, mode).value();
}

FlopCount count_flops(const ModelConfig& c, std::size_t n, GateMode mode) {
  using u64 = std::uint64_t;
  const u64 d = c.d_model, ff = c.d_ff, L = c.n_layers, V = c.vocab_size, N = n;
  const u64 causal_pairs = N * (N + 1) / 2;
  FlopCount f;
  f.embedding = 2 * N * d;  // token + position add
  // per layer: norm, Q/K/V/O projections, scores and weighted sum over causal pairs
  f.attention = L * 2 * (N * d + 4 * N * d * d + 2 * causal_pairs * d);
  if (mode == GateMode::learned) f.gate = L * 2 * (N * d * d + N * d);
  // per layer: norm, W1 + bias + activation, W2 + bias
  f.ffn = L * 2 * (N * d + N * d * ff + 2 * N * ff + N * ff * d + N * d);
  f.residual = L * 2 * (2 * N * d);
  f.unembed = 2 * (N * d + N * d * V);
  return f;
}

#define SYNRES_MODEL_INSTANTIATE(T)                                                            \
  template Params<T> zero_params<T>(const ModelConfig&);                                       \
  template std::size_t parameter_count(const Params<T>&);                                      \
  template Params<T> init_params<T>(const ModelConfig&, const Rng&);                           \
  template ParamVars<T> bind(Graph<T>&, const Params<T>&, bool);                               \
  template AttentionOutput<T> attention_block(Var<T>, const LayerSlots<Var<T>>&,               \
                                              const AttentionParts&);                          \
  template GateOutput<T> resonance_gate(Var<T>, Var<T>, GateMode);                             \
  template Var<T> forward_graph(Graph<T>&, const ModelConfig&, const ParamVars<T>&,            \
                                std::span<const std::int32_t>, std::size_t, GateMode,          \
                                ActivationTrace<T>*);                                          \
  template ForwardResult<T> forward(const ModelConfig&, const Params<T>&,                      \
                                    std::span<const std::int32_t>, GateMode, bool);            \
  template Tensor2<T> forward_batch(const ModelConfig&, const Params<T>&,                      \
                                    std::span<const std::int32_t>, std::size_t, GateMode);

SYNRES_MODEL_INSTANTIATE(float)
SYNRES_MODEL_INSTANTIATE(double)

}  // namespace synres
