#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "synres/datagen.hpp"
#include "synres/model.hpp"
#include "synres/train.hpp"

namespace synres {

// One `key = value` line of a sectioned text file, in file order.
struct KeyValue {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Parses `[section]` headers, `key = value` lines, blank lines and `#`
// comments. Throws ConfigError with the line number on anything else.
std::vector<KeyValue> parse_key_values(const std::string& text);

// Every section of a run: model, train and task.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TaskSpec task;
};

// Unknown sections or keys and unparsable values are hard errors.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Writes every field explicitly; parse_run_config(write(c)) == c.
std::string write_run_config(const RunConfig& config);

// Section writers shared with the checkpoint header.
std::string write_model_section(const ModelConfig& model);
std::string write_train_section(const TrainConfig& train);
std::string write_task_section(const TaskSpec& task);

// Apply a single key of a section; returns false if the key is unknown.
bool apply_model_key(ModelConfig& model, const std::string& key, const std::string& value);
bool apply_train_key(TrainConfig& train, const std::string& key, const std::string& value);
bool apply_task_key(TaskSpec& task, const std::string& key, const std::string& value);

// Shortest text that reads back to the identical double.
std::string format_real(double v);
double parse_real(const std::string& text, const std::string& what);
std::uint64_t parse_count(const std::string& text, const std::string& what);
std::vector<std::size_t> parse_count_list(const std::string& text, const std::string& what);
std::vector<double> parse_real_list(const std::string& text, const std::string& what);

std::string read_file(const std::filesystem::path& path);

}  // namespace synres
