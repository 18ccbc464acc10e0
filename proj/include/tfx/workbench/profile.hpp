#pragma once
// Resource profiling with monotonic clocks and OS process accounting.

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"

namespace tfx {

struct ResourceProfile {
  std::vector<double> epoch_seconds;
  double latency_ms_per_sample = 0.0;  // median of batch-1 generations
  std::size_t latency_samples = 0;
  double peak_rss_mb = 0.0;            // approximate, includes runtime overhead
  double model_size_mb = 0.0;

  nlohmann::ordered_json to_json() const {
    return {{"training_seconds_per_epoch", epoch_seconds},
            {"generation_latency_ms_per_sample", latency_ms_per_sample},
            {"latency_samples", latency_samples},
            {"peak_rss_mb", peak_rss_mb},
            {"peak_rss_note", "process-wide maximum resident set, not model cost alone"},
            {"model_size_mb", model_size_mb}};
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median wall time in milliseconds of `runs` calls of fn(i).
inline double median_latency_ms(std::size_t runs, const std::function<void(std::size_t)>& fn) {
  if (runs < 1) throw ConfigError("latency needs at least one run");
  std::vector<double> ms(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn(i);
    ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return median(std::move(ms));
}

inline double peak_rss_mb() {
  rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) != 0) return 0.0;
  return static_cast<double>(ru.ru_maxrss) / 1024.0;  // ru_maxrss is KiB on Linux
}

inline double file_size_mb(const std::filesystem::path& p) {
  return static_cast<double>(std::filesystem::file_size(p)) / (1024.0 * 1024.0);
}

}  // namespace tfx
