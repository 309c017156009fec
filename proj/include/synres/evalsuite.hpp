#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synres/datagen.hpp"
#include "synres/model.hpp"
#include "synres/train.hpp"

namespace synres {

// Anything that maps a batch of sequences to next-token logits
// [rows * seq_len x V]. Lets the scorers run against non-neural oracles.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Tensor2<double> logits(const Batch& batch) const = 0;
};

template <class T>
class ModelPredictor final : public Predictor {
 public:
  ModelPredictor(const ModelConfig& config, const Params<T>& params, GateMode mode)
      : config_(config), params_(params), mode_(mode) {}
  Tensor2<double> logits(const Batch& batch) const override;

 private:
  const ModelConfig& config_;
  const Params<T>& params_;
  GateMode mode_;
};

// Zero logits everywhere.
class UniformPredictor final : public Predictor {
 public:
  explicit UniformPredictor(std::size_t vocab_size) : vocab_(vocab_size) {}
  Tensor2<double> logits(const Batch& batch) const override;

 private:
  std::size_t vocab_;
};

// Reads the answer off the batch targets: logit 0 on the target, -1e4
// elsewhere.
class TargetOracle final : public Predictor {
 public:
  explicit TargetOracle(std::size_t vocab_size) : vocab_(vocab_size) {}
  Tensor2<double> logits(const Batch& batch) const override;

 private:
  std::size_t vocab_;
};

// Non-neural key-value recall solver: at each position that follows a QUERY
// marker, finds the last earlier occurrence of the queried key followed by a
// value token and predicts that value; otherwise predicts the first value.
class LookupOracle final : public Predictor {
 public:
  explicit LookupOracle(const VocabLayout& layout) : layout_(layout) {}
  Tensor2<double> logits(const Batch& batch) const override;

 private:
  VocabLayout layout_;
};

struct EvalOptions {
  std::size_t batch_rows = 64;
};

// exp(mean NLL over all scored positions).
double perplexity(const Predictor& model, const Batch& data, const EvalOptions& opts = {});

template <class T>
double perplexity(const ModelConfig& config, const Params<T>& params, const Batch& data, GateMode mode) {
  return perplexity(ModelPredictor<T>(config, params, mode), data);
}

// Greedy prediction restricted to `answers`; ties go to the lowest index.
std::int32_t argmax_in(std::span<const double> logits, TokenRange answers);

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// Exact-match accuracy over scored positions, argmax over data.answers.
AccuracyCount masked_accuracy(const Predictor& model, const Dataset& data, const EvalOptions& opts = {});

struct DistanceBucket {
  std::size_t distance = 0;
  std::size_t samples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct RetentionReport {
  std::vector<DistanceBucket> buckets;  // ascending distance
  double aggregate_percent = 0.0;       // sample-weighted mean x 100
  std::size_t samples = 0;
};

// Masked-position exact match bucketed by each row's probe distance.
// Throws std::invalid_argument if any row lacks a distance.
RetentionReport retention_probe(const Predictor& model, const Dataset& data, const EvalOptions& opts = {});

struct NoisePoint {
  double level_percent = 0.0;
  double error_percent = 0.0;
  std::size_t scored = 0;
};

using NoiseGrid = std::vector<NoisePoint>;

inline const std::vector<double>& default_noise_levels() {
  static const std::vector<double> levels{0.0, 10.0, 20.0, 30.0};
  return levels;
}

// For each level p: inject noise at p/100 with a fresh split of `rng`, then
// report 100 - accuracy%. Levels must be strictly increasing within [0, 100].
NoiseGrid noise_robustness(const Predictor& model, const Dataset& data,
                           const std::vector<double>& levels, const Rng& rng,
                           const EvalOptions& opts = {});

struct CoherencePoint {
  std::size_t position = 0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

// Per-position exact-match accuracy over every position of every row,
// argmax over the full vocabulary.
std::vector<CoherencePoint> coherence_curve(const Predictor& model, const Dataset& data,
                                            const EvalOptions& opts = {});

struct LatencyPoint {
  std::size_t seq_len = 0;
  GateMode mode = GateMode::learned;
  double median_ms = 0.0;
  std::uint64_t flops = 0;
  std::uint64_t gate_flops = 0;
};

struct LatencyOptions {
  std::size_t repetitions = 20;
  std::size_t warmups = 3;
  std::uint64_t seed = 7;  // fixed random input tokens
};

double median(std::vector<double> values);

// Wall-clock median of full-sequence forward passes. Must run with no other
// load on the machine to mean anything.
template <class T>
std::vector<LatencyPoint> latency_bench(const ModelConfig& config, const Params<T>& params,
                                        const std::vector<std::size_t>& seq_lens, GateMode mode,
                                        const LatencyOptions& opts = {});

struct ArmSummary {
  GateMode mode = GateMode::learned;
  std::vector<EpochReport> history;
  double final_val_ppl = 0.0;
  RetentionReport retention;
  NoiseGrid noise;
  bool synaptic_unchanged = false;  // every W_s bitwise equal to its init
  std::vector<std::uint64_t> stream_digests;
};

struct AblationResult {
  ArmSummary learned;
  ArmSummary disabled;
  // (learned - disabled) / disabled, reported with sign, never asserted.
  double ppl_delta_relative = 0.0;
  double retention_delta_points = 0.0;
};

template <class T>
struct AblationSinks {
  std::function<void(GateMode, const EpochReport&)> on_epoch;
};

// Two run_training executions on identical data and seeds that differ only
// in gate mode (learned vs disabled), each evaluated afterwards.
template <class T>
AblationResult ablate(const ModelConfig& config, const TrainConfig& train, const TaskSpec& task,
                      const std::vector<double>& noise_levels = default_noise_levels(),
                      const AblationSinks<T>& sinks = {});

}  // namespace synres
