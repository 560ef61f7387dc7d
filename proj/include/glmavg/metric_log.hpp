#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace glmavg {

/// One checkpointed measurement.
struct MetricRow {
  std::int64_t iteration = 0;
  std::string predictor;
  std::string metric;
  double value = 0.0;
  std::string replication;  // index, or "mean" for replication-averaged rows
  std::uint64_t seed = 0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// Ordered metric rows plus a JSON metadata sidecar (config echo, seeds,
/// failure status). Serialized as CSV with header
/// iteration,predictor,metric,value,replication,seed.
struct MetricLog {
  std::vector<MetricRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  void add(std::int64_t iteration, std::string predictor, std::string metric, double value,
           std::string replication = "0", std::uint64_t seed = 0) {
    rows.push_back({iteration, std::move(predictor), std::move(metric), value, std::move(replication), seed});
  }

  /// Rows matching predictor and metric, in log order.
  std::vector<MetricRow> series(const std::string& predictor, const std::string& metric) const;

  /// Iterations must be nondecreasing within each (predictor, metric) series.
  bool series_ordered() const;
};

inline constexpr const char* kMetricCsvHeader = "iteration,predictor,metric,value,replication,seed";

void write_metric_csv(std::ostream& os, const MetricLog& log);
/// Round-trip exact: values are written with 17 significant digits.
std::string metric_csv_string(const MetricLog& log);
MetricLog read_metric_csv(std::istream& is);
MetricLog read_metric_csv_file(const std::string& path);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace glmavg
