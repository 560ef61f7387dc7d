#include "glmavg/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string_view>

#include "glmavg/errors.hpp"

namespace glmavg {

MatrixXd Dataset::columns(const std::vector<Index>& idx) const {
  MatrixXd out(dim(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = x.col(idx[j]);
  return out;
}

VectorXd Dataset::labels(const std::vector<Index>& idx) const {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Index>(j)) = y(idx[j]);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  if (delim == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& v) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool label_matches(std::string_view token, std::string_view wanted) {
  if (token == wanted) return true;
  double a, b;
  return parse_double(token, a) && parse_double(wanted, b) && a == b;
}

}  // namespace

Dataset parse_csv(std::istream& in, const CsvOptions& opts, const std::string& source) {
  std::vector<double> feats;
  std::vector<double> labels;
  Index dim = -1;
  std::string line;
  std::size_t lineno = 0;
  bool skipped_header = !opts.header;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    const auto fields = split_fields(line, opts.delimiter);
    const Index ncol = static_cast<Index>(fields.size());
    if (ncol < 2) throw DataError(source + ":" + std::to_string(lineno) + ": need at least one feature and a label");
    if (dim < 0) dim = ncol - 1;
    if (ncol - 1 != dim)
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim + 1) +
                      " columns, found " + std::to_string(ncol));
    const Index label_col = opts.label_column < 0 ? ncol + opts.label_column : opts.label_column;
    if (label_col < 0 || label_col >= ncol)
      throw DataError(source + ":" + std::to_string(lineno) + ": label column out of range");

    for (Index c = 0; c < ncol; ++c) {
      const auto tok = trim(fields[static_cast<std::size_t>(c)]);
      if (c == label_col) {
        double y;
        if (label_matches(tok, opts.positive_label))
          y = 1.0;
        else if (!opts.negative_label || label_matches(tok, *opts.negative_label))
          y = 0.0;
        else
          throw DataError(source + ":" + std::to_string(lineno) + ": label '" + std::string(tok) +
                          "' is neither the positive nor the negative label");
        labels.push_back(y);
        continue;
      }
      double v;
      if (!parse_double(tok, v) || !std::isfinite(v))
        throw DataError(source + ":" + std::to_string(lineno) + ": non-numeric feature '" + std::string(tok) + "'");
      feats.push_back(v);
    }
  }
  if (labels.empty()) throw DataError(source + ": no data rows");

  Dataset ds;
  const Index n = static_cast<Index>(labels.size());
  ds.x = Eigen::Map<const MatrixXd>(feats.data(), dim, n);
  ds.y = Eigen::Map<const VectorXd>(labels.data(), n);
  ds.source = source;
  return ds;
}

Dataset load_csv(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return parse_csv(in, opts, path);
}

Dataset split_standardize(Dataset ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must be in (0,1)");
  const Index n = ds.size();
  const Index n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  const Index n_train = n - n_test;
  if (n_test < 1 || n_train < 1)
    throw DataError("degenerate split: " + std::to_string(n_train) + " train / " + std::to_string(n_test) + " test");

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  ds.train.assign(perm.begin(), perm.begin() + n_train);
  ds.test.assign(perm.begin() + n_train, perm.end());

  // statistics from train rows only
  Standardization st{VectorXd::Zero(ds.dim()), VectorXd::Zero(ds.dim())};
  for (Index j : ds.train) st.mean += ds.x.col(j);
  st.mean /= static_cast<double>(n_train);
  for (Index j : ds.train) st.stddev.array() += (ds.x.col(j) - st.mean).array().square();
  st.stddev = (st.stddev / static_cast<double>(n_train)).cwiseSqrt();

  for (Index i = 0; i < ds.dim(); ++i) {
    const double sd = st.stddev(i);
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(st.mean(i))));
    for (Index j = 0; j < n; ++j) ds.x(i, j) = constant ? 0.0 : (ds.x(i, j) - st.mean(i)) / sd;
  }
  ds.standardization = std::move(st);
  return ds;
}

void write_csv(std::ostream& out, const Dataset& ds) {
  char buf[64];
  for (Index j = 0; j < ds.size(); ++j) {
    for (Index i = 0; i < ds.dim(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.x(i, j));
      out << buf << ',';
    }
    out << (ds.y(j) == 1.0 ? '1' : '0') << '\n';
  }
}

namespace {

constexpr char kCacheMagic[8] = {'G', 'L', 'M', 'A', 'V', 'G', 'D', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("dataset cache: truncated file");
  return v;
}

void put_indices(std::ostream& os, const std::vector<Index>& idx) {
  put<std::uint64_t>(os, idx.size());
  for (Index i : idx) put<std::uint64_t>(os, static_cast<std::uint64_t>(i));
}

std::vector<Index> get_indices(std::istream& is, Index n) {
  const auto count = get<std::uint64_t>(is);
  if (count > static_cast<std::uint64_t>(n)) throw DataError("dataset cache: bad index count");
  std::vector<Index> idx(count);
  for (auto& i : idx) {
    i = static_cast<Index>(get<std::uint64_t>(is));
    if (i < 0 || i >= n) throw DataError("dataset cache: index out of range");
  }
  return idx;
}

}  // namespace

void write_cache(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write dataset cache '" + path + "'");
  os.write(kCacheMagic, sizeof kCacheMagic);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ds.size()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ds.dim()));
  put<std::uint8_t>(os, ds.standardization ? 1 : 0);
  if (ds.standardization) {
    os.write(reinterpret_cast<const char*>(ds.standardization->mean.data()), ds.dim() * sizeof(double));
    os.write(reinterpret_cast<const char*>(ds.standardization->stddev.data()), ds.dim() * sizeof(double));
  }
  put_indices(os, ds.train);
  put_indices(os, ds.test);
  os.write(reinterpret_cast<const char*>(ds.x.data()), ds.x.size() * sizeof(double));
  for (Index j = 0; j < ds.size(); ++j) put<std::uint8_t>(os, ds.y(j) == 1.0 ? 1 : 0);
  const std::uint64_t source_len = ds.source.size();
  put(os, source_len);
  os.write(ds.source.data(), static_cast<std::streamsize>(source_len));
  if (!os) throw DataError("write failed for dataset cache '" + path + "'");
}

Dataset read_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset cache '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) throw DataError("dataset cache: bad magic");
  const auto n = static_cast<Index>(get<std::uint64_t>(is));
  const auto d = static_cast<Index>(get<std::uint64_t>(is));
  Dataset ds;
  if (get<std::uint8_t>(is)) {
    Standardization st{VectorXd(d), VectorXd(d)};
    is.read(reinterpret_cast<char*>(st.mean.data()), d * sizeof(double));
    is.read(reinterpret_cast<char*>(st.stddev.data()), d * sizeof(double));
    ds.standardization = std::move(st);
  }
  ds.train = get_indices(is, n);
  ds.test = get_indices(is, n);
  ds.x.resize(d, n);
  is.read(reinterpret_cast<char*>(ds.x.data()), ds.x.size() * sizeof(double));
  ds.y.resize(n);
  for (Index j = 0; j < n; ++j) ds.y(j) = get<std::uint8_t>(is) ? 1.0 : 0.0;
  const auto source_len = get<std::uint64_t>(is);
  ds.source.resize(source_len);
  is.read(ds.source.data(), static_cast<std::streamsize>(source_len));
  if (!is) throw DataError("dataset cache: truncated file");
  return ds;
}

}  // namespace glmavg
