#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "synres/datagen.hpp"
#include "synres/model.hpp"
#include "synres/train.hpp"

namespace synres {

// A checkpoint or dataset file that does not match its own manifest.
class CorruptFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Container layout: a text header of `key = value` lines under [sections],
// terminated by one blank line, followed by the raw little-endian payload.
// Each array is described by `tensor.<name> = rows cols width offset kind`
// where kind is `f` (IEEE float, width 4 or 8) or `i` (int32, width 4) and
// offset counts bytes from the start of the payload.
struct ArrayEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t width = 0;
  std::size_t offset = 0;
  char kind = 'f';
  std::size_t bytes() const { return rows * cols * width; }
};

struct Container {
  std::string header_text;  // every header line before [tensors], verbatim
  std::vector<ArrayEntry> manifest;
  std::string payload;
};

std::string encode_container(const std::string& header_text, const std::vector<ArrayEntry>& manifest,
                             const std::string& payload);
// Throws CorruptFile naming the failing manifest entry.
Container decode_container(const std::string& bytes);

struct CheckpointState {
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double val_ppl = 0.0;
};

template <class T>
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  CheckpointState state;
  Params<T> params;
};

template <class T>
std::string encode_checkpoint(const Checkpoint<T>& ckpt);
// Converts the stored element width to T if they differ.
template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes);

// Throws IoError if the file cannot be written or read.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ckpt);
template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

// Element width (4 or 8) of the first parameter tensor in a checkpoint file.
std::size_t checkpoint_width(const std::filesystem::path& path);

// Dataset artifacts share the container format.
std::string encode_dataset(const Dataset& data, const TaskSpec& spec);
Dataset decode_dataset(const std::string& bytes, TaskSpec* spec = nullptr);
void save_dataset(const std::filesystem::path& path, const Dataset& data, const TaskSpec& spec);
Dataset load_dataset(const std::filesystem::path& path, TaskSpec* spec = nullptr);

void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace synres
