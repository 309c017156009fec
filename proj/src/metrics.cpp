#include "synres/metrics.hpp"

#include <cstdio>

#include "synres/config.hpp"
#include "synres/errors.hpp"

namespace synres {

std::string format_metrics_row(const MetricsRow& r) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
  return r.run_id + "," + std::to_string(r.epoch) + "," + r.phase + "," + r.metric + "," + format_real(r.value) +
         "," + std::string(to_string(r.gate_mode)) + "," + std::to_string(r.seed) + "," + wall;
}

MetricsSink::MetricsSink(const std::filesystem::path& path) : out_(&file_) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  file_.open(path, std::ios::app);
  if (!file_) throw IoError("cannot open metrics file " + path.string());
  if (fresh) file_ << kMetricsHeader << "\n";
  file_.flush();
}

MetricsSink::MetricsSink(std::ostream& out) : out_(&out) { *out_ << kMetricsHeader << "\n"; }

void MetricsSink::append(const MetricsRow& row) {
  *out_ << format_metrics_row(row) << "\n";
  out_->flush();
  if (!*out_) throw IoError("failed to append metrics row");
}

std::string run_id_for(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace synres
