#include "synres/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synres/checkpoint.hpp"
#include "synres/config.hpp"
#include "synres/evalsuite.hpp"
#include "synres/metrics.hpp"

namespace synres {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::string out;
  int precision = 32;
};

std::string level_label(double percent) {
  std::ostringstream ss;
  ss << percent;
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

// Writes to --out when given, otherwise to the command's stdout.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : path_(path), fallback_(fallback) {}
  std::ostream& stream() { return path_.empty() ? fallback_ : buffer_; }
  void finish() {
    if (!path_.empty()) write_file(path_, buffer_.str());
  }

 private:
  std::string path_;
  std::ostream& fallback_;
  std::ostringstream buffer_;
};

// ---- train -------------------------------------------------------------------

struct TrainFlags {
  std::string config;
  std::string gate_mode;
};

template <class T>
int train_impl(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const std::string resolved = write_run_config(cfg);
  const std::string run_id = run_id_for(resolved);
  ensure_dir(out_dir);
  write_file(out_dir / "config.resolved.ini", resolved);

  const DatasetSplits data = make_datasets(cfg.task);
  MetricsSink sink(out_dir / "metrics.csv");
  double best = std::numeric_limits<double>::infinity();

  TrainingSinks<T> sinks;
  sinks.on_epoch = [&](const EpochReport& rep, const Params<T>& params) {
    auto row = [&](const char* phase, const char* metric, double value) {
      sink.append({run_id, rep.epoch, phase, metric, value, cfg.model.gate_mode, cfg.train.seed, rep.wall_ms});
    };
    row("train", "loss", rep.train_loss);
    row("train", "ce", rep.ce);
    row("train", "reg", rep.reg);
    row("train", "lr", rep.lr);
    row("train", "steps", static_cast<double>(rep.steps));
    row("val", "perplexity", rep.val_ppl);
    row("val", "lr_decay_triggered", rep.decay_triggered ? 1.0 : 0.0);

    Checkpoint<T> ckpt{cfg.model, cfg.train, {cfg.train.seed, 0, rep.epoch + 1, rep.lr, rep.val_ppl}, params};
    const std::string bytes = encode_checkpoint(ckpt);
    write_file(out_dir / "checkpoint_last.ckpt", bytes);
    if (rep.val_ppl < best) {
      best = rep.val_ppl;
      write_file(out_dir / "checkpoint_best.ckpt", bytes);
    }
  };
  const TrainingResult<T> result = run_training<T>(cfg.model, cfg.train, data.train, data.validation, sinks);
  const EpochReport& last = result.history.back();
  out << "trained " << result.history.size() << (result.history.size() == 1 ? " epoch" : " epochs")
      << "; final loss " << format_real(last.train_loss)
      << ", val perplexity " << format_real(last.val_ppl) << "; outputs in " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const GlobalFlags& g, const TrainFlags& f, std::ostream& out) {
  RunConfig cfg = load_run_config(f.config);
  if (g.seed) cfg.train.seed = *g.seed;
  if (!f.gate_mode.empty()) {
    try {
      cfg.model.gate_mode = parse_gate_mode(f.gate_mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const fs::path out_dir = g.out.empty() ? fs::path("run") : fs::path(g.out);
  return g.precision == 64 ? train_impl<double>(cfg, out_dir, out) : train_impl<float>(cfg, out_dir, out);
}

// ---- shared task flags -------------------------------------------------------------

struct TaskFlags {
  std::string kind = "kv_recall";
  std::size_t seq_len = 0;  // 0: derived (payload for copy, otherwise 64)
  std::size_t payload = 16;
  std::size_t pairs = 4;
  std::string distances = "16,32";
  std::size_t samples = 512;
  std::size_t vocab_size = 64;
  std::size_t value_tokens = 16;
  std::string corpus;
  double train_fraction = 0.9;
};

TaskSpec task_from_flags(const TaskFlags& f, std::uint64_t seed) {
  TaskSpec s;
  s.kind = parse_task_kind(f.kind);
  s.pairs = f.pairs;
  s.distances = parse_count_list(f.distances, "--distances");
  s.samples = f.samples;
  s.val_samples = f.samples;
  s.seed = seed;
  s.vocab_size = f.vocab_size;
  s.value_tokens = f.value_tokens;
  s.corpus_path = f.corpus;
  s.train_fraction = f.train_fraction;
  if (f.seq_len) {
    s.seq_len = f.seq_len;
  } else if (s.kind == TaskKind::copy) {
    s.seq_len = 2 * f.payload + 2;
  } else {
    s.seq_len = 64;
  }
  s.validate();
  return s;
}

void add_task_flags(CLI::App* app, TaskFlags& f) {
  app->add_option("--task", f.kind, "copy, kv_recall or corpus")->capture_default_str();
  app->add_option("--seq-len", f.seq_len, "sequence length (default: 2*payload+2 for copy, 64 otherwise)");
  app->add_option("--payload", f.payload, "copy payload length")->capture_default_str();
  app->add_option("--pairs", f.pairs, "key-value pairs per row")->capture_default_str();
  app->add_option("--distances", f.distances, "comma-separated probe distances")->capture_default_str();
  app->add_option("--samples", f.samples, "rows to generate")->capture_default_str();
  app->add_option("--vocab-size", f.vocab_size, "synthetic vocabulary size")->capture_default_str();
  app->add_option("--value-tokens", f.value_tokens, "size of the value range")->capture_default_str();
  app->add_option("--corpus", f.corpus, "byte corpus file (corpus task)");
  app->add_option("--train-fraction", f.train_fraction, "corpus train split")->capture_default_str();
}

// ---- eval ---------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  TaskFlags task;
  std::string noise_levels = "0,10,20,30";
  std::string metrics = "perplexity,retention,noise,coherence";
  std::string format = "csv";
  std::string gate_mode;
};

template <class T>
int eval_impl(const GlobalFlags& g, const EvalFlags& f, const std::string& ckpt_bytes, std::ostream& out) {
  const Checkpoint<T> ckpt = decode_checkpoint<T>(ckpt_bytes);
  const std::uint64_t seed = g.seed.value_or(ckpt.train.seed);
  const GateMode mode = f.gate_mode.empty() ? ckpt.model.gate_mode : parse_gate_mode(f.gate_mode);

  Dataset data;
  if (!f.data.empty()) {
    data = load_dataset(f.data);
  } else {
    TaskFlags tf = f.task;
    if (tf.kind != "corpus") tf.vocab_size = ckpt.model.vocab_size;
    data = make_datasets(task_from_flags(tf, seed)).validation;
  }
  if (data.layout.vocab_size != ckpt.model.vocab_size) {
    throw ConfigError("evaluation vocabulary (" + std::to_string(data.layout.vocab_size) +
                      ") does not match the checkpoint's (" + std::to_string(ckpt.model.vocab_size) + ")");
  }
  if (data.data.seq_len > ckpt.model.max_seq_len) throw ConfigError("evaluation sequences exceed max_seq_len");

  std::vector<std::string> wanted;
  {
    std::stringstream ss(f.metrics);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item != "perplexity" && item != "retention" && item != "noise" && item != "coherence") {
        throw ConfigError("--metrics: unknown metric '" + item + "'");
      }
      wanted.push_back(item);
    }
  }
  auto want = [&](const char* m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };
  const std::vector<double> levels = parse_real_list(f.noise_levels, "--noise-levels");

  const ModelPredictor<T> model(ckpt.model, ckpt.params, mode);
  const std::string run_id = run_id_for(ckpt_bytes);
  std::vector<MetricsRow> rows;
  json doc = {{"run_id", run_id}, {"epoch", ckpt.state.epoch}, {"gate_mode", to_string(mode)}, {"seed", seed}};
  auto timed = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  auto add = [&](const std::string& metric, double value, double ms) {
    rows.push_back({run_id, ckpt.state.epoch, "eval", metric, value, mode, seed, ms});
  };

  if (want("perplexity")) {
    double ppl = 0;
    const double ms = timed([&] { ppl = perplexity(model, data.data); });
    add("perplexity", ppl, ms);
    doc["perplexity"] = ppl;
  }
  if (want("retention") && data.kind != TaskKind::corpus) {
    RetentionReport rep;
    const double ms = timed([&] { rep = retention_probe(model, data); });
    json buckets = json::array();
    for (const auto& b : rep.buckets) {
      add("retention_d" + std::to_string(b.distance), 100.0 * b.accuracy, ms);
      buckets.push_back({{"distance", b.distance}, {"samples", b.samples}, {"accuracy", b.accuracy}});
    }
    add("retention_aggregate", rep.aggregate_percent, ms);
    doc["retention"] = {{"aggregate_percent", rep.aggregate_percent}, {"buckets", buckets}};
  }
  if (want("noise")) {
    NoiseGrid grid;
    const double ms = timed([&] { grid = noise_robustness(model, data, levels, Rng(seed).split(77)); });
    json pts = json::array();
    for (const auto& p : grid) {
      add("noise_error_p" + level_label(p.level_percent), p.error_percent, ms);
      pts.push_back({{"noise_percent", p.level_percent}, {"error_percent", p.error_percent}});
    }
    doc["noise"] = pts;
  }
  if (want("coherence")) {
    std::vector<CoherencePoint> curve;
    const double ms = timed([&] { curve = coherence_curve(model, data); });
    json pts = json::array();
    for (const auto& p : curve) {
      add("coherence_t" + std::to_string(p.position), p.accuracy, ms);
      pts.push_back({{"position", p.position}, {"accuracy", p.accuracy}});
    }
    doc["coherence"] = pts;
  }

  Output o(g.out, out);
  if (f.format == "json") {
    o.stream() << doc.dump(2) << "\n";
  } else {
    MetricsSink sink(o.stream());
    for (const auto& r : rows) sink.append(r);
  }
  o.finish();
  return kExitOk;
}

int cmd_eval(const GlobalFlags& g, const EvalFlags& f, std::ostream& out) {
  if (f.format != "csv" && f.format != "json") throw ConfigError("--format must be csv or json");
  const std::string bytes = read_file(f.checkpoint);
  return g.precision == 64 ? eval_impl<double>(g, f, bytes, out) : eval_impl<float>(g, f, bytes, out);
}

// ---- bench ----------------------------------------------------------------------

struct BenchFlags {
  std::string checkpoint;
  std::string config;
  std::string seq_lens = "128,256,512,1000";
  std::size_t reps = 20;
  std::size_t warmups = 3;
  std::size_t max_seq_len = 0;
};

template <class T>
int bench_impl(const GlobalFlags& g, const BenchFlags& f, std::ostream& out, std::ostream& err) {
  ModelConfig model;
  Params<T> params;
  if (!f.checkpoint.empty()) {
    Checkpoint<T> ckpt = load_checkpoint<T>(f.checkpoint);
    model = ckpt.model;
    params = std::move(ckpt.params);
  } else {
    RunConfig cfg = load_run_config(f.config);
    model = cfg.model;
    if (f.max_seq_len) model.max_seq_len = f.max_seq_len;
    params = init_params<T>(model, Rng(g.seed.value_or(cfg.train.seed)).split(0));
  }
  const auto lens = parse_count_list(f.seq_lens, "--seq-lens");
  for (auto n : lens) {
    if (n == 0 || n > model.max_seq_len) {
      throw ConfigError("--seq-lens: " + std::to_string(n) + " exceeds max_seq_len " +
                        std::to_string(model.max_seq_len));
    }
  }
  if (f.reps == 0) throw ConfigError("--reps must be >= 1");
  LatencyOptions opts{f.reps, f.warmups, g.seed.value_or(7)};
  err << "# latency_bench: exclusive=true reps=" << f.reps << " warmups=" << f.warmups
      << " precision=" << sizeof(T) * 8 << "\n";
  const auto learned = latency_bench(model, params, lens, GateMode::learned, opts);
  const auto disabled = latency_bench(model, params, lens, GateMode::disabled, opts);

  Output o(g.out, out);
  o.stream() << "seq_len,gate_mode,median_ms,flops,gate_flops,overhead_ratio\n";
  for (std::size_t i = 0; i < lens.size(); ++i) {
    const double ratio = learned[i].median_ms / disabled[i].median_ms;
    for (const auto* p : {&learned[i], &disabled[i]}) {
      o.stream() << p->seq_len << "," << to_string(p->mode) << "," << format_real(p->median_ms) << "," << p->flops
                 << "," << p->gate_flops << "," << format_real(ratio) << "\n";
    }
  }
  o.finish();
  return kExitOk;
}

int cmd_bench(const GlobalFlags& g, const BenchFlags& f, std::ostream& out, std::ostream& err) {
  if (f.checkpoint.empty() == f.config.empty()) throw ConfigError("bench needs exactly one of --checkpoint or --config");
  return g.precision == 64 ? bench_impl<double>(g, f, out, err) : bench_impl<float>(g, f, out, err);
}

// ---- gen-data --------------------------------------------------------------------

json task_json(const TaskSpec& s, const Dataset& d) {
  json j = {{"kind", to_string(s.kind)},
            {"seq_len", s.seq_len},
            {"pairs", s.pairs},
            {"distances", s.distances},
            {"samples", d.data.rows},
            {"seed", s.seed},
            {"vocab_size", d.layout.vocab_size},
            {"value_tokens", s.value_tokens},
            {"answers", {d.answers.lo, d.answers.hi}},
            {"digest", d.data.digest()}};
  if (s.kind == TaskKind::corpus) {
    j["corpus_path"] = s.corpus_path;
    j["train_fraction"] = s.train_fraction;
  }
  return j;
}

int cmd_gen_data(const GlobalFlags& g, const TaskFlags& f, std::ostream& out) {
  if (g.out.empty()) throw ConfigError("gen-data needs --out");
  const TaskSpec spec = task_from_flags(f, g.seed.value_or(1));
  TaskSpec train_spec = spec;
  const Dataset data = make_datasets(train_spec).train;
  save_dataset(g.out, data, spec);
  write_file(g.out + ".json", task_json(spec, data).dump(2) + "\n");
  out << "wrote " << data.data.rows << " rows to " << g.out << "\n";
  return kExitOk;
}

// ---- ablate ----------------------------------------------------------------------

struct AblateFlags {
  std::string config;
  std::string noise_levels = "0,10,20,30";
};

template <class T>
int ablate_impl(const GlobalFlags& g, const AblateFlags& f, std::ostream& out) {
  RunConfig cfg = load_run_config(f.config);
  if (g.seed) cfg.train.seed = *g.seed;
  const fs::path out_dir = g.out.empty() ? fs::path("ablation") : fs::path(g.out);
  ensure_dir(out_dir);
  const std::string resolved = write_run_config(cfg);
  write_file(out_dir / "config.resolved.ini", resolved);
  const std::string run_id = run_id_for(resolved);
  MetricsSink sink(out_dir / "metrics.csv");

  AblationSinks<T> sinks;
  sinks.on_epoch = [&](GateMode mode, const EpochReport& rep) {
    auto row = [&](const char* phase, const char* metric, double value) {
      sink.append({run_id, rep.epoch, phase, metric, value, mode, cfg.train.seed, rep.wall_ms});
    };
    row("train", "loss", rep.train_loss);
    row("train", "ce", rep.ce);
    row("train", "reg", rep.reg);
    row("train", "lr", rep.lr);
    row("val", "perplexity", rep.val_ppl);
  };
  const auto levels = parse_real_list(f.noise_levels, "--noise-levels");
  const AblationResult res = ablate<T>(cfg.model, cfg.train, cfg.task, levels, sinks);

  json arms = json::array();
  std::ostringstream csv;
  csv << "gate_mode,final_val_ppl,retention_percent,final_train_loss,synaptic_unchanged,stream_digest";
  for (double l : levels) csv << ",noise_error_p" << level_label(l);
  csv << "\n";
  for (const ArmSummary* arm : {&res.learned, &res.disabled}) {
    std::uint64_t digest = 0;
    for (auto d : arm->stream_digests) digest = mix64(digest ^ d);
    csv << to_string(arm->mode) << "," << format_real(arm->final_val_ppl) << ","
        << format_real(arm->retention.aggregate_percent) << "," << format_real(arm->history.back().train_loss) << ","
        << (arm->synaptic_unchanged ? "true" : "false") << "," << digest;
    json noise = json::array();
    for (const auto& p : arm->noise) {
      csv << "," << format_real(p.error_percent);
      noise.push_back({{"noise_percent", p.level_percent}, {"error_percent", p.error_percent}});
    }
    csv << "\n";
    json curve = json::array();
    for (const auto& rep : arm->history) {
      curve.push_back({{"epoch", rep.epoch}, {"loss", rep.train_loss}, {"val_ppl", rep.val_ppl}});
    }
    json buckets = json::array();
    for (const auto& b : arm->retention.buckets) {
      buckets.push_back({{"distance", b.distance}, {"accuracy", b.accuracy}});
    }
    arms.push_back({{"gate_mode", to_string(arm->mode)},
                    {"final_val_ppl", arm->final_val_ppl},
                    {"retention_percent", arm->retention.aggregate_percent},
                    {"retention_buckets", buckets},
                    {"noise", noise},
                    {"loss_curve", curve},
                    {"synaptic_unchanged", arm->synaptic_unchanged},
                    {"stream_digest", digest}});
  }
  const json summary = {{"run_id", run_id},
                        {"arms", arms},
                        {"ppl_delta_relative", res.ppl_delta_relative},
                        {"retention_delta_points", res.retention_delta_points}};
  write_file(out_dir / "summary.csv", csv.str());
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  out << csv.str();
  out << "perplexity delta (learned vs disabled): " << format_real(100.0 * res.ppl_delta_relative) << "%\n"
      << "retention delta: " << format_real(res.retention_delta_points) << " points\n";
  return kExitOk;
}

int cmd_ablate(const GlobalFlags& g, const AblateFlags& f, std::ostream& out) {
  return g.precision == 64 ? ablate_impl<double>(g, f, out) : ablate_impl<float>(g, f, out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated-attention micro-transformer: training, evaluation and benchmarks"};
  app.name("synres");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "override the run seed");
  app.add_option("--out", g.out, "output directory (train, ablate) or file (eval, bench, gen-data)");
  app.add_option("--precision", g.precision, "element precision in bits")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "run the training loop and write checkpoints and metrics");
  train->add_option("--config", train_flags.config, "run configuration file")->required();
  train->add_option("--gate-mode", train_flags.gate_mode, "override model.gate_mode");

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_flags.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eval_flags.data, "dataset artifact from gen-data (overrides task flags)");
  add_task_flags(eval, eval_flags.task);
  eval->add_option("--noise-levels", eval_flags.noise_levels, "comma-separated noise percentages")
      ->capture_default_str();
  eval->add_option("--metrics", eval_flags.metrics, "subset of perplexity,retention,noise,coherence")
      ->capture_default_str();
  eval->add_option("--format", eval_flags.format, "csv or json")->capture_default_str();
  eval->add_option("--gate-mode", eval_flags.gate_mode, "override the checkpoint's gate mode");

  BenchFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "latency of full-sequence forward passes, gate on and off");
  bench->add_option("--checkpoint", bench_flags.checkpoint, "checkpoint file");
  bench->add_option("--config", bench_flags.config, "run configuration (random initialisation)");
  bench->add_option("--seq-lens", bench_flags.seq_lens, "comma-separated sequence lengths")->capture_default_str();
  bench->add_option("--reps", bench_flags.reps, "timed repetitions")->capture_default_str();
  bench->add_option("--warmups", bench_flags.warmups, "untimed warmup passes")->capture_default_str();
  bench->add_option("--max-seq-len", bench_flags.max_seq_len, "override model.max_seq_len (with --config)");

  TaskFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset artifact and its JSON sidecar");
  add_task_flags(gen, gen_flags);

  AblateFlags ablate_flags;
  auto* abl = app.add_subcommand("ablate", "train gate-on and gate-off arms on identical data and compare");
  abl->add_option("--config", ablate_flags.config, "run configuration file")->required();
  abl->add_option("--noise-levels", ablate_flags.noise_levels, "comma-separated noise percentages")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "synres: " << e.what() << "\n";
    return kExitConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*train) return cmd_train(g, train_flags, out);
    if (*eval) return cmd_eval(g, eval_flags, out);
    if (*bench) return cmd_bench(g, bench_flags, out, err);
    if (*gen) return cmd_gen_data(g, gen_flags, out);
    if (*abl) return cmd_ablate(g, ablate_flags, out);
  } catch (const CorruptFile& e) {
    err << "synres: corrupt file: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const IoError& e) {
    err << "synres: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "synres: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "synres: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "synres: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace synres
