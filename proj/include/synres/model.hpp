#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synres/autograd.hpp"
#include "synres/rng.hpp"
#include "synres/tensor.hpp"

namespace synres {

// How the per-layer resonance gate treats the attention output.
//   learned     : R = sigmoid(A . W_s), O = A * R
//   forced_ones : R = 1, O = A
//   disabled    : gate skipped, W_s is not on the graph
enum class GateMode { learned, forced_ones, disabled };

std::string_view to_string(GateMode mode);
GateMode parse_gate_mode(std::string_view text);

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_seq_len = 128;
  double sigma_init = 0.02;  // std of the synaptic matrices
  GateMode gate_mode = GateMode::learned;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class S>
struct LayerSlots {
  S wq, wk, wv, wo;
  S w1, b1, w2, b2;
  S ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  S ws;  // synaptic matrix [d x d]
};

// The complete trainable state, parameterised on what each slot holds:
// Tensor2 for values and gradients, Var for a graph binding.
template <class S>
struct ParamSlots {
  S tok_emb;  // [V x d]
  S pos_emb;  // [max_seq_len x d]
  std::vector<LayerSlots<S>> layers;
  S lnf_gain, lnf_bias;
  S unembed;  // [d x V]

  // Visits every slot in a fixed order with a stable name.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f(std::string("tok_emb"), self.tok_emb);
    f(std::string("pos_emb"), self.pos_emb);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layer" + std::to_string(i) + ".";
      f(p + "wq", l.wq);
      f(p + "wk", l.wk);
      f(p + "wv", l.wv);
      f(p + "wo", l.wo);
      f(p + "w1", l.w1);
      f(p + "b1", l.b1);
      f(p + "w2", l.w2);
      f(p + "b2", l.b2);
      f(p + "ln1_gain", l.ln1_gain);
      f(p + "ln1_bias", l.ln1_bias);
      f(p + "ln2_gain", l.ln2_gain);
      f(p + "ln2_bias", l.ln2_bias);
      f(p + "ws", l.ws);
    }
    f(std::string("lnf_gain"), self.lnf_gain);
    f(std::string("lnf_bias"), self.lnf_bias);
    f(std::string("unembed"), self.unembed);
  }
};

template <class T>
using Params = ParamSlots<Tensor2<T>>;
template <class T>
using ParamVars = ParamSlots<Var<T>>;

// Zero-filled tensors with the shapes of `config`'s parameters.
template <class T>
Params<T> zero_params(const ModelConfig& config);

// Closed-form number of scalar parameters.
std::size_t parameter_census(const ModelConfig& config);

template <class T>
std::size_t parameter_count(const Params<T>& params);

// W_s ~ N(0, sigma_init^2); other matrices N(0, 0.02^2); biases 0; gains 1.
// Each tensor draws from its own split of `rng`, so the result depends only on
// the seed.
template <class T>
Params<T> init_params(const ModelConfig& config, const Rng& rng);

// Binds parameters onto a graph as leaves (trainable) or constants.
template <class T>
ParamVars<T> bind(Graph<T>& graph, const Params<T>& params, bool trainable);

template <class T>
struct LayerTrace {
  Tensor2<T> q, k, v;  // projections [n x d]
  Tensor2<T> a;        // attention output after W_o
  Tensor2<T> r;        // relevance map (ones for forced_ones, empty for disabled)
  Tensor2<T> o;        // reinforced output
};

template <class T>
struct ActivationTrace {
  std::vector<LayerTrace<T>> layers;
};

struct AttentionParts {
  std::size_t heads = 1;
  std::size_t seq_len = 1;
  bool causal = true;
};

template <class T>
struct AttentionOutput {
  Var<T> q, k, v, a;
};

// Multi-head self-attention of x [rows x d] (rows = whole sequences of
// parts.seq_len), projected through W_o.
template <class T>
AttentionOutput<T> attention_block(Var<T> x, const LayerSlots<Var<T>>& layer,
                                   const AttentionParts& parts);

template <class T>
struct GateOutput {
  Var<T> r;  // invalid when disabled
  Var<T> o;
};

template <class T>
GateOutput<T> resonance_gate(Var<T> a, Var<T> ws, GateMode mode);

// Builds the full forward pass on `graph`. `tokens` holds consecutive
// sequences of length `seq_len`; returns logits [tokens.size() x V].
template <class T>
Var<T> forward_graph(Graph<T>& graph, const ModelConfig& config, const ParamVars<T>& vars,
                     std::span<const std::int32_t> tokens, std::size_t seq_len, GateMode mode,
                     ActivationTrace<T>* trace = nullptr);

template <class T>
struct ForwardResult {
  Tensor2<T> logits;
  std::optional<ActivationTrace<T>> trace;
};

// Single-sequence inference (no gradient recording).
template <class T>
ForwardResult<T> forward(const ModelConfig& config, const Params<T>& params,
                         std::span<const std::int32_t> tokens, GateMode mode, bool want_trace = false);

// Batched inference over consecutive sequences of length seq_len.
template <class T>
Tensor2<T> forward_batch(const ModelConfig& config, const Params<T>& params,
                         std::span<const std::int32_t> tokens, std::size_t seq_len, GateMode mode);

// Floating-point operation estimate for one full-sequence forward pass.
// Every multiply-add (and every elementwise op) counts as two flops.
struct FlopCount {
  std::uint64_t embedding = 0;
  std::uint64_t attention = 0;  // norms, projections, scores, weighted sum
  std::uint64_t gate = 0;       // A . W_s and A * R
  std::uint64_t ffn = 0;        // norm, two projections, biases, activation
  std::uint64_t residual = 0;
  std::uint64_t unembed = 0;    // final norm and output projection
  std::uint64_t total() const { return embedding + attention + gate + ffn + residual + unembed; }
};

FlopCount count_flops(const ModelConfig& config, std::size_t seq_len, GateMode mode);

}  // namespace synres
