#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "synres/datagen.hpp"
#include "synres/model.hpp"

namespace synres {

struct TrainConfig {
  double lr = 3e-4;
  double lr_decay = 0.5;                 // gamma
  std::optional<double> ppl_threshold;   // tau; unset means 1.5 x vocab size
  double reg_weight = 1e-4;              // lambda
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::optional<double> grad_clip;       // global L2 norm, off when unset
  std::uint64_t seed = 1;
  double min_lr = 1e-6;
  bool shuffle = true;

  // Throws ConfigError naming the offending field.
  void validate() const;
  double threshold_for(std::size_t vocab_size) const {
    return ppl_threshold ? *ppl_threshold : 1.5 * static_cast<double>(vocab_size);
  }
};

template <class T>
struct LossParts {
  Var<T> total;  // graph root
  Var<T> ce;
  Var<T> reg;    // lambda * sum of squared Frobenius norms
};

// total = CE(logits, targets | mask) + lambda * sum_l ||W_s,l||_F^2
template <class T>
LossParts<T> loss(Var<T> logits, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> mask, std::span<const Var<T>> synaptic, T lambda);

// p <- p - lr * g for every tensor, after optional global-norm clipping.
// Throws NumericError naming the first tensor with a non-finite gradient.
template <class T>
void sgd_step(Params<T>& params, const Params<T>& grads, double lr, std::optional<double> grad_clip);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // within the epoch
  double total = 0.0;
  double ce = 0.0;
  double reg = 0.0;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over steps
  double ce = 0.0;
  double reg = 0.0;
  double val_ppl = 0.0;
  double lr = 0.0;          // in effect during this epoch
  bool decay_triggered = false;
  double wall_ms = 0.0;
  std::size_t steps = 0;
  std::uint64_t stream_digest = 0;  // hash of every batch consumed
};

// One forward/backward/update on a batch; returns its loss components.
template <class T>
StepRecord train_step(const ModelConfig& config, Params<T>& params, const Batch& batch,
                      const TrainConfig& train, double lr, GateMode mode);

// Runs every batch once. Fills the loss means, step count and digest; the
// caller fills validation fields.
template <class T>
EpochReport train_epoch(const ModelConfig& config, Params<T>& params, std::span<const Batch> stream,
                        const TrainConfig& train, double lr, GateMode mode, std::size_t epoch,
                        const std::function<void(const StepRecord&)>& on_step = {});

struct LrDecision {
  double lr = 0.0;
  bool triggered = false;
};

// If val_ppl > tau: lr <- max(lr * gamma, min_lr). tau is threshold_for(vocab).
LrDecision lr_decay_check(double val_ppl, double lr, const TrainConfig& config, std::size_t vocab_size);

template <class T>
struct TrainingSinks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochReport&, const Params<T>&)> on_epoch;
};

template <class T>
struct TrainingResult {
  Params<T> params;
  std::vector<EpochReport> history;
};

// Raised when a run stops on a numeric error; keeps the finished epochs.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::vector<EpochReport> history)
      : NumericError(what), history_(std::move(history)) {}
  const std::vector<EpochReport>& history() const { return history_; }

 private:
  std::vector<EpochReport> history_;
};

// Full training loop: epochs of train_epoch, validation perplexity with the
// training gate mode (config.gate_mode), then the learning-rate check.
template <class T>
TrainingResult<T> run_training(const ModelConfig& config, const TrainConfig& train,
                               const Dataset& train_data, const Dataset& validation,
                               const TrainingSinks<T>& sinks = {},
                               std::optional<Params<T>> initial = std::nullopt);

}  // namespace synres
