#include "glmavg/metric_log.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "glmavg/errors.hpp"

namespace glmavg {

namespace {

// from_chars keeps subnormals that stod rejects as out of range
template <typename T>
bool parse_whole(const std::string& s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::vector<MetricRow> MetricLog::series(const std::string& predictor, const std::string& metric) const {
  std::vector<MetricRow> out;
  for (const auto& r : rows)
    if (r.predictor == predictor && r.metric == metric) out.push_back(r);
  return out;
}

bool MetricLog::series_ordered() const {
  std::map<std::pair<std::string, std::string>, std::int64_t> last;
  for (const auto& r : rows) {
    auto [it, inserted] = last.try_emplace({r.predictor, r.metric}, r.iteration);
    if (!inserted) {
      if (r.iteration < it->second) return false;
      it->second = r.iteration;
    }
  }
  return true;
}

void write_metric_csv(std::ostream& os, const MetricLog& log) {
  os << kMetricCsvHeader << '\n';
  char buf[64];
  for (const auto& r : log.rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    os << r.iteration << ',' << r.predictor << ',' << r.metric << ',' << buf << ',' << r.replication << ','
       << r.seed << '\n';
  }
}

std::string metric_csv_string(const MetricLog& log) {
  std::ostringstream os;
  write_metric_csv(os, log);
  return os.str();
}

MetricLog read_metric_csv(std::istream& is) {
  MetricLog log;
  std::string line;
  if (!std::getline(is, line) || line != kMetricCsvHeader) throw DataError("metric CSV: missing or unexpected header");
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw DataError("metric CSV line " + std::to_string(lineno) + ": expected 6 fields");
    MetricRow row{0, f[1], f[2], 0.0, f[4], 0};
    if (!parse_whole(f[0], row.iteration) || !parse_whole(f[3], row.value) || !parse_whole(f[5], row.seed))
      throw DataError("metric CSV line " + std::to_string(lineno) + ": malformed number");
    log.rows.push_back(std::move(row));
  }
  return log;
}

MetricLog read_metric_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metric log '" + path + "'");
  return read_metric_csv(in);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace glmavg
