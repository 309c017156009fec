#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synres/rng.hpp"

namespace synres {

// Half-open token index range [lo, hi).
struct TokenRange {
  std::int32_t lo = 0;
  std::int32_t hi = 0;
  std::size_t size() const { return static_cast<std::size_t>(hi - lo); }
  bool contains(std::int32_t t) const { return t >= lo && t < hi; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

// Partition of the vocabulary into specials, keys and values. Keys and values
// are adjacent, so together they form the non-special symbol range.
struct VocabLayout {
  std::size_t vocab_size = 0;
  std::int32_t pad = 0, bos = 1, sep = 2, query = 3, filler = 4;
  TokenRange keys;
  TokenRange values;
  bool byte_mode = false;

  static constexpr std::size_t kSpecials = 5;

  // Specials at 0..4, keys next, the last `value_tokens` indices are values.
  static VocabLayout synthetic(std::size_t vocab_size, std::size_t value_tokens);
  // Bytes 0..255 map to themselves (keys 0..127, values 128..255); specials
  // follow at 256..260.
  static VocabLayout bytes();

  TokenRange symbols() const { return {keys.lo, values.hi}; }
  bool is_special(std::int32_t t) const { return !symbols().contains(t); }
  // Throws ConfigError if ranges overlap or leave [0, vocab_size).
  void validate() const;
  friend bool operator==(const VocabLayout&, const VocabLayout&) = default;
};

enum class TaskKind { copy, kv_recall, corpus };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct TaskSpec {
  TaskKind kind = TaskKind::copy;
  std::size_t seq_len = 34;                 // n
  std::size_t pairs = 4;                    // m, kv_recall only
  std::vector<std::size_t> distances = {16, 32, 64, 128, 256};
  std::size_t samples = 1024;
  std::size_t val_samples = 256;
  std::uint64_t seed = 1;
  std::size_t vocab_size = 64;              // synthetic tasks
  std::size_t value_tokens = 16;            // synthetic tasks
  std::string corpus_path;                  // corpus only
  double train_fraction = 0.9;              // corpus only

  // Throws ConfigError when the task cannot be generated as specified.
  void validate() const;
  VocabLayout layout() const;
};

// Rows x seq_len token matrices plus per-row metadata. Also used for a whole
// dataset: a dataset is one large Batch.
struct Batch {
  std::size_t rows = 0;
  std::size_t seq_len = 0;
  std::vector<std::int32_t> tokens;   // [rows x seq_len]
  std::vector<std::int32_t> targets;  // [rows x seq_len]; pad where unmasked
  std::vector<std::uint8_t> mask;     // [rows x seq_len]; 1 = scored position
  std::vector<std::uint8_t> protect;  // [rows x seq_len]; 1 = exempt from noise
  std::vector<std::int32_t> distance; // [rows]; probe distance (0 if none)

  Batch() = default;
  Batch(std::size_t rows, std::size_t seq_len);

  std::span<const std::int32_t> row_tokens(std::size_t r) const {
    return {tokens.data() + r * seq_len, seq_len};
  }
  std::size_t masked_count() const;

  // Copies the listed rows, in order, into a new batch.
  Batch select(std::span<const std::size_t> rows) const;
  // Content hash over every field.
  std::uint64_t digest() const;
  // Checks shape consistency, index ranges and >= 1 mask entry per row.
  void validate(std::size_t vocab_size) const;

  friend bool operator==(const Batch&, const Batch&) = default;
};

struct Dataset {
  TaskKind kind = TaskKind::copy;
  VocabLayout layout;
  TokenRange answers;  // tokens that can appear as a scored target
  Batch data;
};

// [BOS, s_1..s_k, SEP, s_1..s_k] with n = 2k + 2; scored on the second copy.
Dataset gen_copy(const TaskSpec& spec, const VocabLayout& layout, Rng& rng, std::size_t count);
// [.., K_1 V_1 .. K_m V_m, .., QUERY, K_i] scored on V_i at the last position.
// Sample j is planted at distance distances[j % |distances|], where the
// distance is the number of positions from V_i to the final token.
Dataset gen_kv_recall(const TaskSpec& spec, const VocabLayout& layout, Rng& rng, std::size_t count);

struct CorpusSplit {
  std::vector<std::int32_t> train;
  std::vector<std::int32_t> validation;
};

// Reads the file as bytes and splits it contiguously; throws IoError if the
// file cannot be read or is empty.
CorpusSplit load_corpus(const std::filesystem::path& path, double train_fraction,
                        double validation_fraction, const VocabLayout& layout);
// Windows of seq_len + 1 tokens with stride seq_len; fully scored. Throws
// DimensionError if the stream is shorter than one window.
Dataset corpus_windows(std::span<const std::int32_t> stream, std::size_t seq_len,
                       const VocabLayout& layout);
std::string detokenize(std::span<const std::int32_t> stream);

// Train and validation datasets for a task, seeded from spec.seed.
struct DatasetSplits {
  Dataset train;
  Dataset validation;
};
DatasetSplits make_datasets(const TaskSpec& spec);

struct NoiseStats {
  std::size_t eligible = 0;
  std::size_t replaced = 0;
};

// Replaces each unprotected input token with probability p by a uniform
// non-special symbol. Targets, masks and metadata are untouched.
Batch inject_noise(const Batch& batch, double p, const VocabLayout& layout, Rng& rng,
                   NoiseStats* stats = nullptr);

// Optional permutation, then contiguous groups of `batch_size`; the final
// group may be short.
std::vector<Batch> batches(const Batch& data, std::size_t batch_size, Rng& rng, bool shuffle);

}  // namespace synres
