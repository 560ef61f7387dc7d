#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "glmavg/types.hpp"

namespace glmavg {

struct CsvOptions {
  /// Zero-based label column; negative counts from the end (-1 = last).
  int label_column = -1;
  /// Label token mapped to y = 1.
  std::string positive_label = "1";
  /// When set, labels must be either this token or the positive one;
  /// otherwise every non-positive label maps to y = 0.
  std::optional<std::string> negative_label;
  /// ',' ';' '\t' ... or ' ' for any run of whitespace.
  char delimiter = ',';
  bool header = false;
};

struct Standardization {
  VectorXd mean;
  VectorXd stddev;
};

/// Binary-labelled tabular data, samples as columns of x (dim x n).
struct Dataset {
  MatrixXd x;
  VectorXd y;
  std::optional<Standardization> standardization;
  /// Train indices in training (shuffled) order; empty until split.
  std::vector<Index> train;
  std::vector<Index> test;
  std::string source;

  Index size() const { return x.cols(); }
  Index dim() const { return x.rows(); }
  bool is_split() const { return !train.empty(); }

  MatrixXd columns(const std::vector<Index>& idx) const;
  VectorXd labels(const std::vector<Index>& idx) const;
};

Dataset load_csv(const std::string& path, const CsvOptions& opts);
Dataset parse_csv(std::istream& in, const CsvOptions& opts, const std::string& source = "<stream>");

/// Seeded shuffle into train/test, then per-feature standardization fitted on
/// the train rows and applied to all rows. Constant train features map to 0.
Dataset split_standardize(Dataset ds, double test_fraction, std::uint64_t seed);

/// Features then the 0/1 label, full precision; reloads with the default CsvOptions.
void write_csv(std::ostream& out, const Dataset& ds);

/// Binary cache: magic, n, d, standardization, split, features as
/// sample-contiguous float64, one label byte per sample.
void write_cache(const std::string& path, const Dataset& ds);
Dataset read_cache(const std::string& path);

}  // namespace glmavg
