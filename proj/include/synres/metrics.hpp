#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include "synres/model.hpp"

namespace synres {

struct MetricsRow {
  std::string run_id;
  std::size_t epoch = 0;
  std::string phase;   // train, val or eval
  std::string metric;
  double value = 0.0;
  GateMode gate_mode = GateMode::learned;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
};

// Column order is part of the file format; never reorder.
inline constexpr const char* kMetricsHeader = "run_id,epoch,phase,metric,value,gate_mode,seed,wall_ms";

std::string format_metrics_row(const MetricsRow& row);

// Append-only CSV writer. Writes the header once, when the file is new or
// empty, or immediately when constructed over a stream.
class MetricsSink {
 public:
  explicit MetricsSink(const std::filesystem::path& path);
  explicit MetricsSink(std::ostream& out);

  void append(const MetricsRow& row);

 private:
  std::ofstream file_;
  std::ostream* out_;
};

// Deterministic run identifier: 16 hex digits of a hash of the text.
std::string run_id_for(const std::string& text);

}  // namespace synres
