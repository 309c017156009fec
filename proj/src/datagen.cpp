#include "synres/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace synres {

VocabLayout VocabLayout::synthetic(std::size_t vocab_size, std::size_t value_tokens) {
  if (vocab_size < kSpecials + 2 || value_tokens == 0 || value_tokens + kSpecials >= vocab_size) {
    throw ConfigError("vocabulary of " + std::to_string(vocab_size) + " cannot hold " +
                      std::to_string(kSpecials) + " specials, >= 1 key and " +
                      std::to_string(value_tokens) + " values");
  }
  VocabLayout l;
  l.vocab_size = vocab_size;
  const auto v = static_cast<std::int32_t>(vocab_size);
  const auto nv = static_cast<std::int32_t>(value_tokens);
  l.keys = {static_cast<std::int32_t>(kSpecials), v - nv};
  l.values = {v - nv, v};
  return l;
}

VocabLayout VocabLayout::bytes() {
  VocabLayout l;
  l.vocab_size = 256 + kSpecials;
  l.pad = 256;
  l.bos = 257;
  l.sep = 258;
  l.query = 259;
  l.filler = 260;
  l.keys = {0, 128};
  l.values = {128, 256};
  l.byte_mode = true;
  return l;
}

void VocabLayout::validate() const {
  const auto v = static_cast<std::int32_t>(vocab_size);
  const std::int32_t specials[] = {pad, bos, sep, query, filler};
  for (std::size_t i = 0; i < std::size(specials); ++i) {
    if (specials[i] < 0 || specials[i] >= v) throw ConfigError("vocab layout: special outside vocabulary");
    if (symbols().contains(specials[i])) throw ConfigError("vocab layout: special overlaps symbols");
    for (std::size_t j = 0; j < i; ++j) {
      if (specials[i] == specials[j]) throw ConfigError("vocab layout: duplicate special token");
    }
  }
  if (keys.lo < 0 || keys.hi != values.lo || values.hi > v || keys.size() == 0 || values.size() == 0) {
    throw ConfigError("vocab layout: key/value ranges must be non-empty, adjacent and inside the vocabulary");
  }
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy:
      return "copy";
    case TaskKind::kv_recall:
      return "kv_recall";
    case TaskKind::corpus:
      return "corpus";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "copy") return TaskKind::copy;
  if (text == "kv_recall") return TaskKind::kv_recall;
  if (text == "corpus") return TaskKind::corpus;
  throw ConfigError("unknown task kind '" + std::string(text) + "' (expected copy, kv_recall or corpus)");
}

VocabLayout TaskSpec::layout() const {
  return kind == TaskKind::corpus ? VocabLayout::bytes() : VocabLayout::synthetic(vocab_size, value_tokens);
}

void TaskSpec::validate() const {
  if (samples == 0) throw ConfigError("task.samples must be >= 1");
  switch (kind) {
    case TaskKind::copy:
      layout().validate();
      if (seq_len < 4 || seq_len % 2 != 0) {
        throw ConfigError("copy task needs an even seq_len >= 4 (n = 2k + 2), got " + std::to_string(seq_len));
      }
      break;
    case TaskKind::kv_recall: {
      const VocabLayout l = layout();
      l.validate();
      if (pairs == 0) throw ConfigError("task.pairs must be >= 1");
      if (pairs > l.keys.size()) {
        throw ConfigError("task.pairs (" + std::to_string(pairs) + ") exceeds the " +
                          std::to_string(l.keys.size()) + " available key tokens");
      }
      if (distances.empty()) throw ConfigError("task.distances must not be empty");
      for (auto d : distances) {
        if (d < 2 * pairs || d + 2 * pairs > seq_len) {
          throw ConfigError("distance " + std::to_string(d) + " incompatible with seq_len " +
                            std::to_string(seq_len) + " and " + std::to_string(pairs) +
                            " pairs (need 2m <= d <= n - 2m)");
        }
      }
      break;
    }
    case TaskKind::corpus:
      if (corpus_path.empty()) throw ConfigError("corpus task needs task.corpus_path");
      if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw ConfigError("task.train_fraction must lie in (0, 1]");
      }
      if (seq_len < 1) throw ConfigError("task.seq_len must be >= 1");
      break;
  }
}

Batch::Batch(std::size_t r, std::size_t n)
    : rows(r),
      seq_len(n),
      tokens(r * n, 0),
      targets(r * n, 0),
      mask(r * n, 0),
      protect(r * n, 0),
      distance(r, 0) {}

std::size_t Batch::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Batch Batch::select(std::span<const std::size_t> ids) const {
  Batch out(ids.size(), seq_len);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t src = ids[i] * seq_len, dst = i * seq_len;
    std::copy_n(tokens.begin() + src, seq_len, out.tokens.begin() + dst);
    std::copy_n(targets.begin() + src, seq_len, out.targets.begin() + dst);
    std::copy_n(mask.begin() + src, seq_len, out.mask.begin() + dst);
    std::copy_n(protect.begin() + src, seq_len, out.protect.begin() + dst);
    out.distance[i] = distance[ids[i]];
  }
  return out;
}

std::uint64_t Batch::digest() const {
  // FNV-1a over the little-endian bytes of every field.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  eat(rows, 8);
  eat(seq_len, 8);
  for (auto t : tokens) eat(static_cast<std::uint32_t>(t), 4);
  for (auto t : targets) eat(static_cast<std::uint32_t>(t), 4);
  for (auto m : mask) eat(m, 1);
  for (auto p : protect) eat(p, 1);
  for (auto d : distance) eat(static_cast<std::uint32_t>(d), 4);
  return h;
}

void Batch::validate(std::size_t vocab_size) const {
  const std::size_t n = rows * seq_len;
  if (tokens.size() != n || targets.size() != n || mask.size() != n || protect.size() != n ||
      distance.size() != rows) {
    throw DimensionError("batch: field sizes disagree with rows x seq_len");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab_size) {
      throw DimensionError("batch: token " + std::to_string(tokens[i]) + " outside vocabulary");
    }
    if (mask[i] && (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab_size)) {
      throw DimensionError("batch: target " + std::to_string(targets[i]) + " outside vocabulary");
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (std::none_of(mask.begin() + r * seq_len, mask.begin() + (r + 1) * seq_len,
                     [](std::uint8_t m) { return m != 0; })) {
      throw DimensionError("batch: row " + std::to_string(r) + " has no scored position");
    }
  }
}

namespace {

std::int32_t draw(TokenRange range, Rng& rng) {
  return range.lo + static_cast<std::int32_t>(rng.below(range.size()));
}

void require_vocab(const TaskSpec& spec, const VocabLayout& layout) {
  layout.validate();
  if (spec.kind != TaskKind::corpus && !(layout == spec.layout())) {
    throw ConfigError("task spec and vocabulary layout disagree");
  }
}

}  // namespace

Dataset gen_copy(const TaskSpec& spec, const VocabLayout& layout, Rng& rng, std::size_t count) {
  if (spec.kind != TaskKind::copy) throw ConfigError("gen_copy: task kind is not copy");
  spec.validate();
  require_vocab(spec, layout);
  const std::size_t n = spec.seq_len;
  const std::size_t k = (n - 2) / 2;
  Dataset ds{TaskKind::copy, layout, layout.symbols(), Batch(count, n)};
  Batch& b = ds.data;
  for (std::size_t r = 0; r < count; ++r) {
    std::int32_t* tok = b.tokens.data() + r * n;
    tok[0] = layout.bos;
    tok[k + 1] = layout.sep;
    for (std::size_t j = 0; j < k; ++j) {
      tok[1 + j] = draw(layout.symbols(), rng);
      tok[k + 2 + j] = tok[1 + j];
    }
    for (std::size_t t = 0; t < n; ++t) {
      b.targets[r * n + t] = t + 1 < n ? tok[t + 1] : layout.pad;
    }
    // Positions SEP .. second-to-last predict the copied payload.
    for (std::size_t t = k + 1; t <= 2 * k; ++t) b.mask[r * n + t] = 1;
    b.protect[r * n] = 1;
    b.protect[r * n + k + 1] = 1;
    b.distance[r] = static_cast<std::int32_t>(k + 1);
  }
  return ds;
}

Dataset gen_kv_recall(const TaskSpec& spec, const VocabLayout& layout, Rng& rng, std::size_t count) {
  if (spec.kind != TaskKind::kv_recall) throw ConfigError("gen_kv_recall: task kind is not kv_recall");
  spec.validate();
  require_vocab(spec, layout);
  const std::size_t n = spec.seq_len, m = spec.pairs;
  Dataset ds{TaskKind::kv_recall, layout, layout.values, Batch(count, n)};
  Batch& b = ds.data;
  std::vector<std::int32_t> key_pool(layout.keys.size());
  std::vector<std::int32_t> row_vals(m);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t dist = spec.distances[r % spec.distances.size()];
    const std::size_t queried = rng.below(m);  // 0-based pair index
    // m distinct keys by partial Fisher-Yates.
    std::iota(key_pool.begin(), key_pool.end(), layout.keys.lo);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t pick = j + rng.below(key_pool.size() - j);
      std::swap(key_pool[j], key_pool[pick]);
    }
    for (std::size_t j = 0; j < m; ++j) row_vals[j] = draw(layout.values, rng);

    std::int32_t* tok = b.tokens.data() + r * n;
    std::fill(tok, tok + n, layout.filler);
    const std::size_t value_pos = n - 1 - dist;
    const std::size_t start = value_pos - (2 * queried + 1);
    for (std::size_t j = 0; j < m; ++j) {
      tok[start + 2 * j] = key_pool[j];
      tok[start + 2 * j + 1] = row_vals[j];
    }
    tok[n - 2] = layout.query;
    tok[n - 1] = key_pool[queried];
    std::fill_n(b.targets.begin() + r * n, n, layout.pad);
    b.targets[r * n + n - 1] = row_vals[queried];
    b.mask[r * n + n - 1] = 1;
    b.protect[r * n + n - 2] = 1;
    b.protect[r * n + n - 1] = 1;
    b.distance[r] = static_cast<std::int32_t>(dist);
  }
  return ds;
}

CorpusSplit load_corpus(const std::filesystem::path& path, double train_fraction,
                        double validation_fraction, const VocabLayout& layout) {
  if (!layout.byte_mode) throw ConfigError("load_corpus: layout is not in byte mode");
  if (train_fraction < 0.0 || validation_fraction < 0.0 ||
      std::abs(train_fraction + validation_fraction - 1.0) > 1e-9) {
    throw ConfigError("load_corpus: split fractions must be non-negative and sum to 1");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading corpus file " + path.string());
  if (bytes.empty()) throw IoError("corpus file " + path.string() + " is empty");

  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(bytes.size())));
  CorpusSplit split;
  split.train.reserve(cut);
  split.validation.reserve(bytes.size() - cut);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto tok = static_cast<std::int32_t>(static_cast<unsigned char>(bytes[i]));
    (i < cut ? split.train : split.validation).push_back(tok);
  }
  return split;
}

Dataset corpus_windows(std::span<const std::int32_t> stream, std::size_t seq_len,
                       const VocabLayout& layout) {
  if (seq_len == 0) throw DimensionError("corpus_windows: seq_len must be >= 1");
  if (stream.size() < seq_len + 1) {
    throw DimensionError("corpus stream of " + std::to_string(stream.size()) +
                         " tokens is shorter than one window of " + std::to_string(seq_len + 1));
  }
  const std::size_t count = (stream.size() - 1) / seq_len;
  Dataset ds{TaskKind::corpus, layout, {0, static_cast<std::int32_t>(layout.vocab_size)}, Batch(count, seq_len)};
  Batch& b = ds.data;
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t base = r * seq_len;
    for (std::size_t t = 0; t < seq_len; ++t) {
      b.tokens[base + t] = stream[base + t];
      b.targets[base + t] = stream[base + t + 1];
      b.mask[base + t] = 1;
    }
  }
  return ds;
}

std::string detokenize(std::span<const std::int32_t> stream) {
  std::string out;
  out.reserve(stream.size());
  for (auto t : stream) {
    if (t < 0 || t > 255) throw DimensionError("detokenize: token " + std::to_string(t) + " is not a byte");
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

DatasetSplits make_datasets(const TaskSpec& spec) {
  spec.validate();
  const VocabLayout layout = spec.layout();
  const Rng root(spec.seed);
  switch (spec.kind) {
    case TaskKind::copy: {
      Rng tr = root.split(1), va = root.split(2);
      return {gen_copy(spec, layout, tr, spec.samples), gen_copy(spec, layout, va, spec.val_samples)};
    }
    case TaskKind::kv_recall: {
      Rng tr = root.split(1), va = root.split(2);
      return {gen_kv_recall(spec, layout, tr, spec.samples),
              gen_kv_recall(spec, layout, va, spec.val_samples)};
    }
    case TaskKind::corpus: {
      const CorpusSplit split = load_corpus(spec.corpus_path, spec.train_fraction, 1.0 - spec.train_fraction, layout);
      return {corpus_windows(split.train, spec.seq_len, layout),
              corpus_windows(split.validation, spec.seq_len, layout)};
    }
  }
  throw std::logic_error("make_datasets: bad task kind");
}

Batch inject_noise(const Batch& batch, double p, const VocabLayout& layout, Rng& rng, NoiseStats* stats) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("inject_noise: p must lie in [0, 1]");
  Batch out = batch;
  NoiseStats local;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (out.protect[i]) continue;
    ++local.eligible;
    if (rng.uniform() < p) {
      out.tokens[i] = draw(layout.symbols(), rng);
      ++local.replaced;
    }
  }
  if (stats) *stats = local;
  return out;
}

std::vector<Batch> batches(const Batch& data, std::size_t batch_size, Rng& rng, bool shuffle) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
  if (data.rows == 0) throw std::invalid_argument("batches: empty dataset");
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  }
  std::vector<Batch> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    const std::size_t e = std::min(order.size(), s + batch_size);
    out.push_back(data.select(std::span<const std::size_t>(order.data() + s, e - s)));
  }
  return out;
}

}  // namespace synres
