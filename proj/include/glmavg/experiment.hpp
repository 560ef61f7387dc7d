#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glmavg/data.hpp"
#include "glmavg/family.hpp"
#include "glmavg/features.hpp"
#include "glmavg/metric_log.hpp"
#include "glmavg/predictor.hpp"
#include "glmavg/synth.hpp"

namespace glmavg {

enum class ProblemKind { Synthetic, Dataset };

/// Parsed experiment configuration. The on-disk format is one `key = value`
/// per line, `#` comments, comma-separated lists. Recognized keys:
///
///   problem            synth | dataset
///   family             logistic | poisson | gaussian
///   synth.model        sinsum | cube | kernel_ratio | wellspecified | wellspecified_poisson
///   synth.d, synth.seed, synth.n, synth.theta_true (list)
///   data.path, data.cache, data.label_column, data.positive_label,
///   data.negative_label, data.delimiter (comma|tab|space|semicolon|<char>),
///   data.header, data.test_fraction, data.seed, data.n (cap on train samples)
///   features           linear | nystrom
///   kernel.kind        laplacian | gaussian
///   kernel.sigma       number, or `d` for the input dimension
///   nystrom.m, nystrom.seed, nystrom.prefix (landmark pool size, default 10 m)
///   gamma, lambda      lists
///   seed, replications
///   checkpoints.count, checkpoints.first, checkpoints.spacing (log)
///   history.stride, burn_in
///   predictors         list of last | param_avg | pred_avg_exact | pred_avg_taylor
///   eval.n_mc, eval.seed, eval.fstar (true|false), reference.lambda
///   output             directory for CSV and metadata
struct ExperimentConfig {
  ProblemKind problem = ProblemKind::Synthetic;
  FamilyKind family = FamilyKind::Logistic;

  SynthSpec synth;
  Index n = 100000;

  std::string data_path;
  std::string data_cache;
  CsvOptions csv;
  double test_fraction = 0.2;
  std::uint64_t data_seed = 0;

  FeatureKind features = FeatureKind::Linear;
  KernelKind kernel_kind = KernelKind::Laplacian;
  /// Unset means "input dimension".
  std::optional<double> kernel_sigma = 50.0;
  Index nystrom_m = 100;
  std::uint64_t nystrom_seed = 0;
  Index nystrom_prefix = 0;

  std::vector<double> gammas{0.5, 0.1, 0.02};
  std::vector<double> lambdas{0.0};
  std::uint64_t seed = 0;
  int replications = 1;
  Index checkpoint_count = 30;
  Index checkpoint_first = 10;
  Index history_stride = 1;
  Index burn_in = 0;
  std::vector<PredictorKind> predictors{PredictorKind::Last, PredictorKind::ParamAvg, PredictorKind::PredAvgTaylor};

  Index n_mc = 100000;
  std::uint64_t eval_seed = 12345;
  std::optional<bool> fstar;
  double reference_lambda = 0.0;

  std::string output;

  /// Every key as given, echoed into metadata.
  std::map<std::string, std::string> raw;

  bool wants_fstar() const { return fstar.value_or(features == FeatureKind::Linear); }
  void validate() const;
};

/// Applies one key to the config; throws ConfigError on unknown keys or bad values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv);

/// FNV-1a over the canonical sorted key=value echo.
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct RunRecord {
  double gamma = 0.0;
  double lambda = 0.0;
  int replication = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | diverged | error
  std::string message;
  MetricLog log;
};

struct AveragedLog {
  double gamma = 0.0;
  double lambda = 0.0;
  int successful = 0;
  MetricLog log;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<AveragedLog> averaged;
  nlohmann::json metadata;

  bool any_failed() const;
};

/// Seed used by replication `rep` (shared across all gamma and lambda values).
std::uint64_t replication_seed(std::uint64_t base, int rep);

/// Worker count from GLMAVG_THREADS, defaulting to the hardware concurrency.
unsigned default_thread_count();

/// Trains every (gamma, lambda, replication) combination and evaluates the
/// configured predictors at log-spaced checkpoints. Divergent runs are
/// recorded and skipped in the averages; the others proceed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned threads = 0);

/// Per-run CSVs under runs/, replication-averaged CSVs, metadata.json.
void write_experiment(const ExperimentResult& result, const std::string& outdir);

std::string run_file_name(double gamma, double lambda, int rep);
std::string averaged_file_name(double gamma, double lambda);

/// Arithmetic mean across logs with identical row layout.
MetricLog average_logs(const std::vector<const MetricLog*>& logs, std::uint64_t seed);

struct ScalingRow {
  std::string predictor;
  double tail_gamma = 0.0;
  double tail_half = 0.0;
  double ratio = 0.0;
  double exponent = 0.0;
  bool flagged = false;
  std::string note;
};

/// Tail means of `metric` over the last `tail_window` checkpoints for the runs
/// at gamma (`at_gamma`) and gamma/2 (`at_half`), and log2 of the ratio of
/// their magnitudes.
std::vector<ScalingRow> scaling_summary(const MetricLog& at_gamma, const MetricLog& at_half, Index tail_window,
                                        const std::string& metric = "excess_vs_fstar");
std::string format_scaling_report(const std::vector<ScalingRow>& rows);

struct BestLinearResult {
  VectorXd theta;
  /// Oracle F* (synthetic) or held-out NLL of the test-set fit (dataset).
  double value = 0.0;
  double std_error = 0.0;
  /// F** for synthetic problems.
  std::optional<double> f_star_star;
  std::string label;
  nlohmann::json to_json() const;
};

/// Fits the best-in-model reference for replication 0's feature map.
BestLinearResult best_linear(const ExperimentConfig& cfg);

}  // namespace glmavg
