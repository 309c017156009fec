#include "synres/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace synres {

template <class T>
Tensor2<double> ModelPredictor<T>::logits(const Batch& batch) const {
  return forward_batch(config_, params_, batch.tokens, batch.seq_len, mode_).template cast<double>();
}

Tensor2<double> UniformPredictor::logits(const Batch& batch) const {
  return Tensor2<double>(batch.rows * batch.seq_len, vocab_);
}

Tensor2<double> TargetOracle::logits(const Batch& batch) const {
  Tensor2<double> out(batch.rows * batch.seq_len, vocab_, -1e4);
  for (std::size_t i = 0; i < batch.targets.size(); ++i) {
    out(i, static_cast<std::size_t>(batch.targets[i])) = 0.0;
  }
  return out;
}

Tensor2<double> LookupOracle::logits(const Batch& batch) const {
  const std::size_t n = batch.seq_len;
  Tensor2<double> out(batch.rows * n, layout_.vocab_size);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    auto tok = batch.row_tokens(r);
    for (std::size_t t = 1; t < n; ++t) {
      if (tok[t - 1] != layout_.query) continue;
      const std::int32_t key = tok[t];
      std::int32_t answer = layout_.values.lo;
      for (std::size_t u = t - 1; u-- > 0;) {
        if (tok[u] == key && layout_.values.contains(tok[u + 1]) && u + 1 < t - 1) {
          answer = tok[u + 1];
          break;
        }
      }
      out(r * n + t, static_cast<std::size_t>(answer)) = 1.0;
    }
  }
  return out;
}

namespace {

// Calls fn(chunk, logits) over consecutive row chunks of `data`.
template <class Fn>
void for_chunks(const Predictor& model, const Batch& data, const EvalOptions& opts, Fn&& fn) {
  const std::size_t step = std::max<std::size_t>(1, opts.batch_rows);
  std::vector<std::size_t> ids;
  for (std::size_t s = 0; s < data.rows; s += step) {
    const std::size_t e = std::min(data.rows, s + step);
    ids.resize(e - s);
    std::iota(ids.begin(), ids.end(), s);
    const Batch chunk = data.select(ids);
    const Tensor2<double> logits = model.logits(chunk);
    if (logits.rows() != chunk.rows * chunk.seq_len) {
      throw DimensionError("predictor returned " + logits.shape() + " logits for " +
                           std::to_string(chunk.rows * chunk.seq_len) + " positions");
    }
    fn(chunk, logits);
  }
}

}  // namespace

double perplexity(const Predictor& model, const Batch& data, const EvalOptions& opts) {
  if (data.rows == 0) throw std::invalid_argument("perplexity: empty evaluation set");
  double nll = 0.0;
  std::size_t count = 0;
  for_chunks(model, data, opts, [&](const Batch& chunk, const Tensor2<double>& logits) {
    for (std::size_t i = 0; i < chunk.mask.size(); ++i) {
      if (!chunk.mask[i]) continue;
      auto row = logits.row(i);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      nll += mx + std::log(z) - row[static_cast<std::size_t>(chunk.targets[i])];
      ++count;
    }
  });
  if (count == 0) throw std::invalid_argument("perplexity: no scored positions");
  return std::exp(nll / static_cast<double>(count));
}

std::int32_t argmax_in(std::span<const double> logits, TokenRange answers) {
  std::int32_t best = answers.lo;
  for (std::int32_t t = answers.lo + 1; t < answers.hi; ++t) {
    if (logits[static_cast<std::size_t>(t)] > logits[static_cast<std::size_t>(best)]) best = t;
  }
  return best;
}

AccuracyCount masked_accuracy(const Predictor& model, const Dataset& data, const EvalOptions& opts) {
  AccuracyCount acc;
  for_chunks(model, data.data, opts, [&](const Batch& chunk, const Tensor2<double>& logits) {
    for (std::size_t i = 0; i < chunk.mask.size(); ++i) {
      if (!chunk.mask[i]) continue;
      ++acc.total;
      if (argmax_in(logits.row(i), data.answers) == chunk.targets[i]) ++acc.correct;
    }
  });
  return acc;
}

RetentionReport retention_probe(const Predictor& model, const Dataset& data, const EvalOptions& opts) {
  if (std::any_of(data.data.distance.begin(), data.data.distance.end(), [](std::int32_t d) { return d <= 0; })) {
    throw std::invalid_argument("retention_probe: dataset rows carry no probe distance");
  }
  std::map<std::size_t, DistanceBucket> buckets;
  for_chunks(model, data.data, opts, [&](const Batch& chunk, const Tensor2<double>& logits) {
    for (std::size_t r = 0; r < chunk.rows; ++r) {
      auto& b = buckets[static_cast<std::size_t>(chunk.distance[r])];
      for (std::size_t t = 0; t < chunk.seq_len; ++t) {
        const std::size_t i = r * chunk.seq_len + t;
        if (!chunk.mask[i]) continue;
        ++b.samples;
        if (argmax_in(logits.row(i), data.answers) == chunk.targets[i]) ++b.correct;
      }
    }
  });
  RetentionReport rep;
  std::size_t correct = 0;
  for (auto& [dist, b] : buckets) {
    b.distance = dist;
    b.accuracy = b.samples ? static_cast<double>(b.correct) / static_cast<double>(b.samples) : 0.0;
    rep.samples += b.samples;
    correct += b.correct;
    rep.buckets.push_back(b);
  }
  rep.aggregate_percent = rep.samples ? 100.0 * static_cast<double>(correct) / static_cast<double>(rep.samples) : 0.0;
  return rep;
}

NoiseGrid noise_robustness(const Predictor& model, const Dataset& data, const std::vector<double>& levels,
                           const Rng& rng, const EvalOptions& opts) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] >= 0.0 && levels[i] <= 100.0)) {
      throw std::invalid_argument("noise_robustness: levels must lie in [0, 100]");
    }
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw std::invalid_argument("noise_robustness: levels must be strictly increasing");
    }
  }
  NoiseGrid grid;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    Rng stream = rng.split(i);
    Dataset noisy = data;
    noisy.data = inject_noise(data.data, levels[i] / 100.0, data.layout, stream);
    const AccuracyCount acc = masked_accuracy(model, noisy, opts);
    grid.push_back({levels[i], 100.0 - 100.0 * acc.accuracy(), acc.total});
  }
  return grid;
}

std::vector<CoherencePoint> coherence_curve(const Predictor& model, const Dataset& data, const EvalOptions& opts) {
  const std::size_t n = data.data.seq_len;
  std::vector<CoherencePoint> curve(n);
  const TokenRange all{0, static_cast<std::int32_t>(data.layout.vocab_size)};
  for_chunks(model, data.data, opts, [&](const Batch& chunk, const Tensor2<double>& logits) {
    for (std::size_t i = 0; i < chunk.tokens.size(); ++i) {
      auto& p = curve[i % n];
      ++p.count;
      if (argmax_in(logits.row(i), all) == chunk.targets[i]) p.accuracy += 1.0;
    }
  });
  for (std::size_t t = 0; t < n; ++t) {
    curve[t].position = t;
    if (curve[t].count) curve[t].accuracy /= static_cast<double>(curve[t].count);
  }
  return curve;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

template <class T>
std::vector<LatencyPoint> latency_bench(const ModelConfig& config, const Params<T>& params,
                                        const std::vector<std::size_t>& seq_lens, GateMode mode,
                                        const LatencyOptions& opts) {
  if (opts.repetitions == 0) throw std::invalid_argument("latency_bench: repetitions must be >= 1");
  std::vector<LatencyPoint> curve;
  for (std::size_t n : seq_lens) {
    if (n == 0 || n > config.max_seq_len) {
      throw DimensionError("latency_bench: sequence length " + std::to_string(n) + " outside [1, " +
                           std::to_string(config.max_seq_len) + "]");
    }
    Rng rng = Rng(opts.seed).split(n);
    std::vector<std::int32_t> tokens(n);
    for (auto& t : tokens) t = static_cast<std::int32_t>(rng.below(config.vocab_size));
    for (std::size_t i = 0; i < opts.warmups; ++i) (void)forward(config, params, tokens, mode);
    std::vector<double> times;
    for (std::size_t i = 0; i < opts.repetitions; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)forward(config, params, tokens, mode);
      times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    const FlopCount flops = count_flops(config, n, mode);
    curve.push_back({n, mode, median(std::move(times)), flops.total(), flops.gate});
  }
  return curve;
}

template <class T>
AblationResult ablate(const ModelConfig& config, const TrainConfig& train, const TaskSpec& task,
                      const std::vector<double>& noise_levels, const AblationSinks<T>& sinks) {
  config.validate();
  train.validate();
  const DatasetSplits data = make_datasets(task);
  const Params<T> init = init_params<T>(config, Rng(train.seed).split(0));

  auto run_arm = [&](GateMode mode) {
    ModelConfig arm_config = config;
    arm_config.gate_mode = mode;
    TrainingSinks<T> arm_sinks;
    if (sinks.on_epoch) {
      arm_sinks.on_epoch = [&](const EpochReport& rep, const Params<T>&) { sinks.on_epoch(mode, rep); };
    }
    TrainingResult<T> run = run_training<T>(arm_config, train, data.train, data.validation, arm_sinks, init);
    ArmSummary s;
    s.mode = mode;
    s.history = run.history;
    s.final_val_ppl = run.history.back().val_ppl;
    const ModelPredictor<T> model(arm_config, run.params, mode);
    if (task.kind != TaskKind::corpus) s.retention = retention_probe(model, data.validation);
    s.noise = noise_levels.empty() ? NoiseGrid{} : noise_robustness(model, data.validation, noise_levels, Rng(task.seed).split(77));
    s.synaptic_unchanged = true;
    for (std::size_t l = 0; l < init.layers.size(); ++l) {
      s.synaptic_unchanged = s.synaptic_unchanged && bitwise_equal(init.layers[l].ws, run.params.layers[l].ws);
    }
    for (const auto& rep : run.history) s.stream_digests.push_back(rep.stream_digest);
    return s;
  };

  AblationResult res;
  res.learned = run_arm(GateMode::learned);
  res.disabled = run_arm(GateMode::disabled);
  res.ppl_delta_relative = (res.learned.final_val_ppl - res.disabled.final_val_ppl) / res.disabled.final_val_ppl;
  res.retention_delta_points = res.learned.retention.aggregate_percent - res.disabled.retention.aggregate_percent;
  return res;
}

template class ModelPredictor<float>;
template class ModelPredictor<double>;

#define SYNRES_EVAL_INSTANTIATE(T)                                                                   \
  template std::vector<LatencyPoint> latency_bench(const ModelConfig&, const Params<T>&,             \
                                                   const std::vector<std::size_t>&, GateMode,        \
                                                   const LatencyOptions&);                           \
  template AblationResult ablate<T>(const ModelConfig&, const TrainConfig&, const TaskSpec&,         \
                                    const std::vector<double>&, const AblationSinks<T>&);

SYNRES_EVAL_INSTANTIATE(float)
SYNRES_EVAL_INSTANTIATE(double)

}  // namespace synres
