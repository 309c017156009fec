#include "synres/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "synres/evalsuite.hpp"

namespace synres {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw ConfigError("train.lr_decay must lie in (0, 1)");
  if (ppl_threshold && !(*ppl_threshold > 0.0)) throw ConfigError("train.ppl_threshold must be positive");
  if (!(reg_weight >= 0.0)) throw ConfigError("train.reg_weight must be >= 0");
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
  if (!(min_lr > 0.0)) throw ConfigError("train.min_lr must be positive");
  if (!(lr > min_lr)) throw ConfigError("train.lr must exceed train.min_lr");
}

template <class T>
LossParts<T> loss(Var<T> logits, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> mask, std::span<const Var<T>> synaptic, T lambda) {
  if (!(lambda >= T(0))) throw std::invalid_argument("loss: lambda must be >= 0");
  Graph<T>& g = logits.graph();
  LossParts<T> parts;
  parts.ce = cross_entropy_logits(logits, targets, mask);
  Var<T> norms = g.constant(Tensor2<T>(1, 1));
  for (const auto& ws : synaptic) norms = add(norms, frobenius_sq(ws));
  parts.reg = scale(norms, lambda);
  parts.total = add(parts.ce, parts.reg);
  return parts;
}

template <class T>
void sgd_step(Params<T>& params, const Params<T>& grads, double lr, std::optional<double> grad_clip) {
  std::vector<const Tensor2<T>*> g;
  grads.for_each([&](const std::string&, const Tensor2<T>& t) { g.push_back(&t); });
  double sq = 0.0;
  std::size_t i = 0;
  params.for_each([&](const std::string& name, const Tensor2<T>& p) {
    const Tensor2<T>& gi = *g[i++];
    if (!gi.same_shape(p)) {
      throw DimensionError("sgd_step: gradient for " + name + " has shape " + gi.shape() +
                           ", parameter has " + p.shape());
    }
    if (!gi.all_finite()) throw NumericError("sgd_step: non-finite gradient in " + name);
    for (T v : gi.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  });
  double factor = 1.0;
  if (grad_clip) {
    const double norm = std::sqrt(sq);
    if (norm > *grad_clip) factor = *grad_clip / norm;
  }
  const T step = static_cast<T>(lr * factor);
  i = 0;
  params.for_each([&](const std::string& name, Tensor2<T>& p) {
    const Tensor2<T>& gi = *g[i++];
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= step * gi[j];
    if (!p.all_finite()) throw NumericError("sgd_step: parameter " + name + " became non-finite");
  });
}

template <class T>
StepRecord train_step(const ModelConfig& config, Params<T>& params, const Batch& batch,
                      const TrainConfig& train, double lr, GateMode mode) {
  Graph<T> graph;
  ParamVars<T> vars = bind(graph, params, true);
  Var<T> logits = forward_graph(graph, config, vars, batch.tokens, batch.seq_len, mode);

  // Without the learned gate W_s is off the forward path; it is also kept off
  // the regulariser's gradient so it stays frozen.
  std::vector<Var<T>> synaptic;
  for (std::size_t i = 0; i < vars.layers.size(); ++i) {
    synaptic.push_back(mode == GateMode::learned ? vars.layers[i].ws : graph.constant(params.layers[i].ws));
  }
  LossParts<T> parts = loss<T>(logits, batch.targets, batch.mask, synaptic, static_cast<T>(train.reg_weight));
  graph.backward(parts.total);

  Params<T> grads;
  grads.layers.resize(params.layers.size());
  std::vector<Tensor2<T>> flat;
  vars.for_each([&](const std::string&, const Var<T>& v) { flat.push_back(graph.grad(v)); });
  std::size_t i = 0;
  grads.for_each([&](const std::string&, Tensor2<T>& t) { t = std::move(flat[i++]); });

  sgd_step(params, grads, lr, train.grad_clip);
  return {0, 0, static_cast<double>(parts.total.value()[0]), static_cast<double>(parts.ce.value()[0]),
          static_cast<double>(parts.reg.value()[0])};
}

template <class T>
EpochReport train_epoch(const ModelConfig& config, Params<T>& params, std::span<const Batch> stream,
                        const TrainConfig& train, double lr, GateMode mode, std::size_t epoch,
                        const std::function<void(const StepRecord&)>& on_step) {
  if (stream.empty()) throw std::invalid_argument("train_epoch: empty batch stream");
  const auto t0 = std::chrono::steady_clock::now();
  EpochReport rep;
  rep.epoch = epoch;
  rep.lr = lr;
  std::uint64_t digest = 0xcbf29ce484222325ULL;
  for (std::size_t b = 0; b < stream.size(); ++b) {
    StepRecord rec;
    try {
      rec = train_step(config, params, stream[b], train, lr, mode);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
    }
    rec.epoch = epoch;
    rec.step = b;
    rep.train_loss += rec.total;
    rep.ce += rec.ce;
    rep.reg += rec.reg;
    digest = mix64(digest ^ stream[b].digest());
    if (on_step) on_step(rec);
  }
  const auto steps = static_cast<double>(stream.size());
  rep.train_loss /= steps;
  rep.ce /= steps;
  rep.reg /= steps;
  rep.steps = stream.size();
  rep.stream_digest = digest;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

LrDecision lr_decay_check(double val_ppl, double lr, const TrainConfig& config, std::size_t vocab_size) {
  if (!(std::isfinite(val_ppl) && val_ppl > 0.0)) {
    throw std::invalid_argument("lr_decay_check: validation perplexity must be finite and positive");
  }
  if (val_ppl > config.threshold_for(vocab_size)) {
    return {std::max(lr * config.lr_decay, config.min_lr), true};
  }
  return {lr, false};
}

template <class T>
TrainingResult<T> run_training(const ModelConfig& config, const TrainConfig& train,
                               const Dataset& train_data, const Dataset& validation,
                               const TrainingSinks<T>& sinks, std::optional<Params<T>> initial) {
  config.validate();
  train.validate();
  train_data.data.validate(config.vocab_size);
  validation.data.validate(config.vocab_size);
  if (&train_data == &validation) throw std::invalid_argument("run_training: train and validation splits must differ");

  const Rng root(train.seed);
  TrainingResult<T> result;
  result.params = initial ? std::move(*initial) : init_params<T>(config, root.split(0));
  double lr = train.lr;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    Rng order = root.split(1000 + epoch);
    const std::vector<Batch> stream = batches(train_data.data, train.batch_size, order, train.shuffle);
    EpochReport rep;
    try {
      rep = train_epoch(config, result.params, std::span<const Batch>(stream), train, lr, config.gate_mode,
                        epoch, sinks.on_step);
      rep.val_ppl = perplexity(config, result.params, validation.data, config.gate_mode);
    } catch (const NumericError& e) {
      throw TrainingAborted(e.what(), result.history);
    }
    const LrDecision next = lr_decay_check(rep.val_ppl, lr, train, config.vocab_size);
    rep.decay_triggered = next.triggered;
    lr = next.lr;
    result.history.push_back(rep);
    if (sinks.on_epoch) sinks.on_epoch(rep, result.params);
  }
  return result;
}

#define SYNRES_TRAIN_INSTANTIATE(T)                                                                   \
  template LossParts<T> loss(Var<T>, std::span<const std::int32_t>, std::span<const std::uint8_t>,   \
                             std::span<const Var<T>>, T);                                            \
  template void sgd_step(Params<T>&, const Params<T>&, double, std::optional<double>);               \
  template StepRecord train_step(const ModelConfig&, Params<T>&, const Batch&, const TrainConfig&,   \
                                 double, GateMode);                                                  \
  template EpochReport train_epoch(const ModelConfig&, Params<T>&, std::span<const Batch>,           \
                                   const TrainConfig&, double, GateMode, std::size_t,                \
                                   const std::function<void(const StepRecord&)>&);                   \
  template TrainingResult<T> run_training(const ModelConfig&, const TrainConfig&, const Dataset&,    \
                                          const Dataset&, const TrainingSinks<T>&,                   \
                                          std::optional<Params<T>>);

SYNRES_TRAIN_INSTANTIATE(float)
SYNRES_TRAIN_INSTANTIATE(double)

}  // namespace synres
