#include "glmavg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "glmavg/eval.hpp"
#include "glmavg/trainer.hpp"

namespace glmavg {

namespace {

std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  const long long i = to_int(key, v);
  if (i < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(i);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

char to_delimiter(const std::string& v) {
  if (v == "comma" || v == ",") return ',';
  if (v == "tab" || v == "\\t") return '\t';
  if (v == "space" || v == "whitespace") return ' ';
  if (v == "semicolon" || v == ";") return ';';
  if (v.size() == 1) return v[0];
  throw ConfigError("unknown delimiter '" + v + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& raw_value) {
  const std::string v = trim_copy(raw_value);
  cfg.raw[key] = v;
  if (key == "problem") {
    if (v == "synth" || v == "synthetic")
      cfg.problem = ProblemKind::Synthetic;
    else if (v == "dataset" || v == "data")
      cfg.problem = ProblemKind::Dataset;
    else
      throw ConfigError("unknown problem '" + v + "'");
  } else if (key == "family") {
    cfg.family = parse_family_kind(v);
    cfg.synth.family = cfg.family;
  } else if (key == "synth.model") {
    cfg.synth.model = parse_synth_model(v);
    if (!cfg.raw.contains("synth.d")) cfg.synth.dim = SynthSpec::default_dim(cfg.synth.model);
  } else if (key == "synth.d") {
    cfg.synth.dim = to_int(key, v);
  } else if (key == "synth.seed") {
    cfg.synth.seed = to_u64(key, v);
  } else if (key == "synth.n" || key == "n") {
    cfg.n = to_int(key, v);
  } else if (key == "synth.theta_true") {
    const auto t = to_doubles(key, v);
    cfg.synth.theta_true = Eigen::Map<const VectorXd>(t.data(), static_cast<Index>(t.size()));
  } else if (key == "data.path") {
    cfg.data_path = v;
  } else if (key == "data.cache") {
    cfg.data_cache = v;
  } else if (key == "data.label_column") {
    cfg.csv.label_column = static_cast<int>(to_int(key, v));
  } else if (key == "data.positive_label") {
    cfg.csv.positive_label = v;
  } else if (key == "data.negative_label") {
    cfg.csv.negative_label = v;
  } else if (key == "data.delimiter") {
    cfg.csv.delimiter = to_delimiter(v);
  } else if (key == "data.header") {
    cfg.csv.header = to_bool(key, v);
  } else if (key == "data.test_fraction") {
    cfg.test_fraction = to_double(key, v);
  } else if (key == "data.seed") {
    cfg.data_seed = to_u64(key, v);
  } else if (key == "data.n") {
    cfg.n = to_int(key, v);
  } else if (key == "features") {
    if (v == "linear")
      cfg.features = FeatureKind::Linear;
    else if (v == "nystrom" || v == "kernel")
      cfg.features = FeatureKind::Nystrom;
    else
      throw ConfigError("unknown feature map '" + v + "'");
  } else if (key == "kernel.kind") {
    cfg.kernel_kind = parse_kernel_kind(v);
  } else if (key == "kernel.sigma") {
    if (v == "d" || v == "dim")
      cfg.kernel_sigma.reset();
    else
      cfg.kernel_sigma = to_double(key, v);
  } else if (key == "nystrom.m") {
    cfg.nystrom_m = to_int(key, v);
  } else if (key == "nystrom.seed") {
    cfg.nystrom_seed = to_u64(key, v);
  } else if (key == "nystrom.prefix") {
    cfg.nystrom_prefix = to_int(key, v);
  } else if (key == "gamma") {
    cfg.gammas = to_doubles(key, v);
  } else if (key == "lambda") {
    cfg.lambdas = to_doubles(key, v);
  } else if (key == "seed") {
    cfg.seed = to_u64(key, v);
  } else if (key == "replications") {
    cfg.replications = static_cast<int>(to_int(key, v));
  } else if (key == "checkpoints.count" || key == "checkpoints") {
    cfg.checkpoint_count = to_int(key, v);
  } else if (key == "checkpoints.first") {
    cfg.checkpoint_first = to_int(key, v);
  } else if (key == "checkpoints.spacing") {
    if (v != "log") throw ConfigError("only log checkpoint spacing is supported");
  } else if (key == "history.stride") {
    cfg.history_stride = to_int(key, v);
  } else if (key == "burn_in") {
    cfg.burn_in = to_int(key, v);
  } else if (key == "predictors") {
    cfg.predictors.clear();
    for (const auto& p : split_list(v)) cfg.predictors.push_back(parse_predictor_kind(p));
  } else if (key == "eval.n_mc") {
    cfg.n_mc = to_int(key, v);
  } else if (key == "eval.seed") {
    cfg.eval_seed = to_u64(key, v);
  } else if (key == "eval.fstar") {
    cfg.fstar = to_bool(key, v);
  } else if (key == "reference.lambda") {
    cfg.reference_lambda = to_double(key, v);
  } else if (key == "output") {
    cfg.output = v;
  } else {
    cfg.raw.erase(key);
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  if (gammas.empty()) throw ConfigError("at least one gamma is required");
  for (double g : gammas)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("gamma values must be finite and >= 0");
  if (lambdas.empty()) throw ConfigError("at least one lambda is required");
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda values must be finite and >= 0");
  if (replications < 1) throw ConfigError("replications must be >= 1");
  if (n < 1) throw ConfigError("n must be >= 1");
  if (checkpoint_count < 0) throw ConfigError("checkpoints.count must be >= 0");
  if (history_stride < 1) throw ConfigError("history.stride must be >= 1");
  if (predictors.empty()) throw ConfigError("at least one predictor is required");
  if (features == FeatureKind::Nystrom && nystrom_m < 1) throw ConfigError("nystrom.m must be >= 1");
  if (kernel_sigma && !(*kernel_sigma > 0.0)) throw ConfigError("kernel.sigma must be positive");
  if (problem == ProblemKind::Synthetic && n_mc < 2) throw ConfigError("eval.n_mc must be >= 2");
  if (problem == ProblemKind::Dataset) {
    if (data_path.empty() && data_cache.empty()) throw ConfigError("dataset problem needs data.path or data.cache");
    if (family != FamilyKind::Logistic) throw ConfigError("dataset problems use the logistic family");
  }
  if (problem == ProblemKind::Synthetic) {
    const bool ws = synth.model == SynthModel::WellSpecifiedLinear || synth.model == SynthModel::WellSpecifiedPoisson;
    if (!ws && family != FamilyKind::Logistic) throw ConfigError("this synthetic model is logistic");
    if (synth.model == SynthModel::WellSpecifiedPoisson && family != FamilyKind::Poisson)
      throw ConfigError("wellspecified_poisson needs family = poisson");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(cfg, trim_copy(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  // model first so that its default dimension does not clobber synth.d
  if (auto it = kv.find("synth.model"); it != kv.end()) set_config_value(cfg, it->first, it->second);
  for (const auto& [k, v] : kv)
    if (k != "synth.model") set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : cfg.raw) {
    if (k == "output") continue;
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

std::uint64_t replication_seed(std::uint64_t base, int rep) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(rep) + 1));
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("GLMAVG_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool ExperimentResult::any_failed() const {
  return std::any_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.status != "ok"; });
}

std::string run_file_name(double gamma, double lambda, int rep) {
  return "run_g" + fmt_number(gamma) + "_l" + fmt_number(lambda) + "_r" + std::to_string(rep) + ".csv";
}

std::string averaged_file_name(double gamma, double lambda) {
  return "avg_g" + fmt_number(gamma) + "_l" + fmt_number(lambda) + ".csv";
}

MetricLog average_logs(const std::vector<const MetricLog*>& logs, std::uint64_t seed) {
  MetricLog out;
  if (logs.empty()) return out;
  const auto& first = logs.front()->rows;
  for (const auto* l : logs)
    if (l->rows.size() != first.size()) throw std::invalid_argument("average_logs: row layouts differ");
  out.rows.reserve(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    double sum = 0.0;
    for (const auto* l : logs) {
      const auto& r = l->rows[i];
      if (r.iteration != first[i].iteration || r.predictor != first[i].predictor || r.metric != first[i].metric)
        throw std::invalid_argument("average_logs: row layouts differ");
      sum += r.value;
    }
    out.add(first[i].iteration, first[i].predictor, first[i].metric, sum / static_cast<double>(logs.size()), "mean",
            seed);
  }
  return out;
}

namespace {

using FeatureMapPtr = std::shared_ptr<const FeatureMap<double>>;

/// Everything one replication shares across its (gamma, lambda) runs.
struct ReplicationContext {
  int rep = 0;
  std::uint64_t seed = 0;
  FeatureMapPtr fm;
  // synthetic evaluation
  MatrixXd phi_eval;
  VectorXd eta_star;  // best-in-model natural parameter at the oracle points
  std::optional<Estimate> f_star;
  VectorXd theta_star;
  // dataset evaluation
  VectorXd y_eval;
  double reference_nll = 0.0;
  std::vector<Index> train_order;
  std::string error;
};

struct SharedContext {
  const ExperimentConfig& cfg;
  LinkFamily<double> fam;
  std::optional<OracleSet> oracle;
  Estimate f_star_star;
  std::optional<Dataset> data;
  std::vector<Index> checkpoints;
  Index stream_length = 0;
  double sigma = 1.0;
};

SynthSpec synth_spec_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  SynthSpec spec = cfg.synth;
  spec.family = cfg.family;
  spec.seed = seed;
  return spec;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.data_cache.empty() && std::filesystem::exists(cfg.data_cache)) return read_cache(cfg.data_cache);
  Dataset ds = split_standardize(load_csv(cfg.data_path, cfg.csv), cfg.test_fraction, cfg.data_seed);
  if (!cfg.data_cache.empty()) write_cache(cfg.data_cache, ds);
  return ds;
}

/// Landmarks: m points drawn uniformly without replacement from the first
/// `pool` samples of the training stream.
MatrixXd pick_landmarks(const MatrixXd& pool, Index m, std::uint64_t seed) {
  if (pool.cols() < m)
    throw ConfigError("nystrom: landmark pool of " + std::to_string(pool.cols()) + " samples is smaller than m = " +
                      std::to_string(m));
  std::vector<Index> idx(static_cast<std::size_t>(pool.cols()));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  MatrixXd out(pool.rows(), m);
  for (Index j = 0; j < m; ++j) out.col(j) = pool.col(idx[static_cast<std::size_t>(j)]);
  return out;
}

Index landmark_pool_size(const ExperimentConfig& cfg, Index available) {
  const Index want = cfg.nystrom_prefix > 0 ? cfg.nystrom_prefix : 10 * cfg.nystrom_m;
  return std::min(want, available);
}

SharedContext make_shared_context(const ExperimentConfig& cfg) {
  SharedContext sh{cfg, LinkFamily<double>(cfg.family), {}, {}, {}, {}, 0, 1.0};
  Index input_dim = 0;
  if (cfg.problem == ProblemKind::Synthetic) {
    const OracleProblem problem = oracle_problem(synth_spec_for(cfg, cfg.seed));
    sh.fam = problem.fam;
    sh.oracle = make_oracle_set(problem, cfg.n_mc, cfg.eval_seed);
    sh.f_star_star = oracle_f_star_star(*sh.oracle);
    sh.stream_length = cfg.n;
    input_dim = problem.input_dim;
  } else {
    sh.data = load_dataset(cfg);
    sh.stream_length = std::min<Index>(cfg.n, static_cast<Index>(sh.data->train.size()));
    input_dim = sh.data->dim();
  }
  sh.sigma = cfg.kernel_sigma.value_or(static_cast<double>(input_dim));
  sh.checkpoints =
      cfg.checkpoint_count > 0
          ? log_checkpoints(std::min(cfg.checkpoint_first, sh.stream_length), sh.stream_length, cfg.checkpoint_count)
          : std::vector<Index>{};
  return sh;
}

ReplicationContext make_replication(const SharedContext& sh, int rep) {
  const ExperimentConfig& cfg = sh.cfg;
  ReplicationContext rc;
  rc.rep = rep;
  rc.seed = replication_seed(cfg.seed, rep);

  if (sh.data) {
    rc.train_order = sh.data->train;
    if (rep > 0) {
      std::mt19937_64 rng(rc.seed);
      std::shuffle(rc.train_order.begin(), rc.train_order.end(), rng);
    }
    rc.train_order.resize(static_cast<std::size_t>(sh.stream_length));
  }

  if (cfg.features == FeatureKind::Linear) {
    const Index dim = sh.data ? sh.data->dim() : sh.oracle->x.rows();
    rc.fm = std::make_shared<const FeatureMap<double>>(FeatureMap<double>::linear(dim));
  } else {
    MatrixXd pool;
    if (sh.data) {
      const Index p = landmark_pool_size(cfg, static_cast<Index>(rc.train_order.size()));
      pool = sh.data->columns(std::vector<Index>(rc.train_order.begin(), rc.train_order.begin() + p));
    } else {
      SampleStream prefix(synth_spec_for(cfg, rc.seed), cfg.n);
      const Index p = landmark_pool_size(cfg, cfg.n);
      pool.resize(prefix.spec().dim, p);
      Sample<double> s;
      for (Index j = 0; j < p && prefix.next(s); ++j) pool.col(j) = s.x;
    }
    const Kernel<double> kernel{cfg.kernel_kind, sh.sigma};
    const std::uint64_t lm_seed = replication_seed(cfg.nystrom_seed, rep);
    rc.fm = std::make_shared<const FeatureMap<double>>(
        FeatureMap<double>::nystrom(kernel, pick_landmarks(pool, cfg.nystrom_m, lm_seed)));
  }

  if (sh.oracle) {
    rc.phi_eval = rc.fm->map_columns(sh.oracle->x);
    if (cfg.wants_fstar()) {
      // best-in-model parameter on the oracle objective itself (soft labels mu**)
      const FitResult fit = fit_best_linear(sh.fam, rc.phi_eval, sh.oracle->mu_ss, cfg.reference_lambda);
      rc.theta_star = fit.theta;
      rc.eta_star = rc.phi_eval.transpose() * fit.theta;
      rc.f_star = oracle_risk(*sh.oracle, rc.eta_star);
    }
  } else {
    rc.phi_eval = rc.fm->map_columns(sh.data->columns(sh.data->test));
    rc.y_eval = sh.data->labels(sh.data->test);
    // reference fitted on the test split itself
    const FitResult fit = fit_best_linear(sh.fam, rc.phi_eval, rc.y_eval, cfg.reference_lambda);
    rc.theta_star = fit.theta;
    rc.reference_nll = heldout_nll_moments(
        Predictor<double>::param_avg(sh.fam, rc.fm, fit.theta).predict_batch(rc.phi_eval), rc.y_eval);
  }
  return rc;
}

void evaluate_checkpoint(const SharedContext& sh, const ReplicationContext& rc, const RunRecord& run, Index iteration,
                         const TrainerState<double>& state, MetricLog& log) {
  const std::string rep = std::to_string(run.replication);
  for (PredictorKind kind : sh.cfg.predictors) {
    const auto pred = Predictor<double>::from_state(kind, state, sh.fam, rc.fm);
    const std::string name(to_string(kind));
    if (sh.oracle) {
      const VectorXd eta = pred.natural_batch(rc.phi_eval);
      const Estimate risk = oracle_risk(*sh.oracle, eta);
      const Estimate ex_ss = oracle_excess(*sh.oracle, eta, sh.oracle->eta_ss);
      log.add(iteration, name, "risk", risk.value, rep, run.seed);
      log.add(iteration, name, "excess_vs_fstarstar", ex_ss.value, rep, run.seed);
      log.add(iteration, name, "stderr_vs_fstarstar", ex_ss.std_error, rep, run.seed);
      if (rc.f_star) {
        const Estimate ex_s = oracle_excess(*sh.oracle, eta, rc.eta_star);
        log.add(iteration, name, "excess_vs_fstar", ex_s.value, rep, run.seed);
        log.add(iteration, name, "stderr_vs_fstar", ex_s.std_error, rep, run.seed);
      }
    } else {
      const double nll = heldout_nll_moments(pred.predict_batch(rc.phi_eval), rc.y_eval);
      log.add(iteration, name, "nll", nll, rep, run.seed);
      log.add(iteration, name, "excess_vs_best", nll - rc.reference_nll, rep, run.seed);
    }
  }
}

void execute_run(const SharedContext& sh, const ReplicationContext& rc, RunRecord& run) {
  const ExperimentConfig& cfg = sh.cfg;
  SgdConfig<double> sgd;
  sgd.gamma = run.gamma;
  sgd.lambda = run.lambda;
  sgd.theta0 = VectorXd::Zero(rc.fm->output_dim());
  sgd.burn_in = cfg.burn_in;
  sgd.history_stride = cfg.history_stride;
  sgd.store_history = std::find(cfg.predictors.begin(), cfg.predictors.end(), PredictorKind::PredAvgExact) !=
                      cfg.predictors.end();

  const EvalHook<double> hook = [&](Index it, const TrainerState<double>& st, MetricLog& log) {
    evaluate_checkpoint(sh, rc, run, it, st, log);
  };
  try {
    if (sh.data) {
      ColumnStream<double> stream(sh.data->x, sh.data->y, rc.train_order);
      run.log = train_stream(sgd, sh.fam, *rc.fm, stream, sh.checkpoints, hook).log;
    } else {
      SampleStream stream(synth_spec_for(cfg, rc.seed), cfg.n);
      run.log = train_stream(sgd, sh.fam, *rc.fm, stream, sh.checkpoints, hook).log;
    }
  } catch (const DivergenceError& e) {
    run.status = "diverged";
    run.message = e.what();
    run.log.rows.clear();
  } catch (const std::exception& e) {
    run.status = "error";
    run.message = e.what();
    run.log.rows.clear();
  }
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
}

nlohmann::json config_echo(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : cfg.raw) j[k] = v;
  return j;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned threads) {
  cfg.validate();
  if (threads == 0) threads = default_thread_count();
  const SharedContext sh = make_shared_context(cfg);

  std::vector<ReplicationContext> reps(static_cast<std::size_t>(cfg.replications));
  parallel_for(reps.size(), threads, [&](std::size_t r) {
    try {
      reps[r] = make_replication(sh, static_cast<int>(r));
    } catch (const std::exception& e) {
      reps[r].rep = static_cast<int>(r);
      reps[r].seed = replication_seed(cfg.seed, static_cast<int>(r));
      reps[r].error = e.what();
    }
  });

  ExperimentResult result;
  for (double g : cfg.gammas)
    for (double l : cfg.lambdas)
      for (int r = 0; r < cfg.replications; ++r) {
        RunRecord run;
        run.gamma = g;
        run.lambda = l;
        run.replication = r;
        run.seed = reps[static_cast<std::size_t>(r)].seed;
        result.runs.push_back(std::move(run));
      }

  parallel_for(result.runs.size(), threads, [&](std::size_t i) {
    RunRecord& run = result.runs[i];
    const ReplicationContext& rc = reps[static_cast<std::size_t>(run.replication)];
    if (!rc.error.empty()) {
      run.status = "error";
      run.message = "replication setup failed: " + rc.error;
      return;
    }
    execute_run(sh, rc, run);
  });

  nlohmann::json runs_meta = nlohmann::json::array();
  for (double g : cfg.gammas)
    for (double l : cfg.lambdas) {
      std::vector<const MetricLog*> ok;
      for (const auto& run : result.runs)
        if (run.gamma == g && run.lambda == l && run.status == "ok") ok.push_back(&run.log);
      AveragedLog avg{g, l, static_cast<int>(ok.size()), average_logs(ok, cfg.seed)};
      result.averaged.push_back(std::move(avg));
    }
  for (const auto& run : result.runs)
    runs_meta.push_back({{"gamma", run.gamma},
                         {"lambda", run.lambda},
                         {"replication", run.replication},
                         {"seed", run.seed},
                         {"status", run.status},
                         {"message", run.message},
                         {"file", "runs/" + run_file_name(run.gamma, run.lambda, run.replication)}});

  nlohmann::json refs = nlohmann::json::array();
  for (const auto& rc : reps) {
    nlohmann::json r{{"replication", rc.rep}, {"seed", rc.seed}};
    if (!rc.error.empty()) r["error"] = rc.error;
    if (rc.fm) {
      r["feature_dim"] = rc.fm->output_dim();
      if (rc.fm->kind() == FeatureKind::Nystrom) r["nystrom_rank"] = rc.fm->rank();
    }
    if (rc.f_star) {
      r["f_star"] = rc.f_star->value;
      r["f_star_stderr"] = rc.f_star->std_error;
    }
    if (rc.theta_star.size() > 0 && rc.theta_star.size() <= 64)
      r["theta_star"] = std::vector<double>(rc.theta_star.data(), rc.theta_star.data() + rc.theta_star.size());
    if (sh.data) r["reference_nll"] = rc.reference_nll;
    refs.push_back(std::move(r));
  }

  nlohmann::json& md = result.metadata;
  md["config"] = config_echo(cfg);
  md["config_hash"] = config_hash(cfg);
  md["family"] = std::string(sh.fam.name());
  md["problem"] = cfg.problem == ProblemKind::Synthetic ? "synth" : "dataset";
  md["stream_length"] = sh.stream_length;
  md["checkpoints"] = sh.checkpoints;
  md["kernel_sigma"] = sh.sigma;
  md["replication_averaging"] = "arithmetic mean of metric values on the linear scale over successful replications";
  md["references"] = refs;
  md["runs"] = runs_meta;
  md["failed"] = result.any_failed();
  if (sh.oracle) {
    md["n_mc"] = cfg.n_mc;
    md["eval_seed"] = cfg.eval_seed;
    md["f_star_star"] = sh.f_star_star.value;
    md["f_star_star_stderr"] = sh.f_star_star.std_error;
    md["f_star_reference"] = "minimizer of the Monte-Carlo oracle objective with labels mu**(x)";
  }
  if (sh.data) {
    md["dataset"] = {{"source", sh.data->source},
                     {"n", sh.data->size()},
                     {"d", sh.data->dim()},
                     {"train", sh.data->train.size()},
                     {"test", sh.data->test.size()},
                     {"test_fraction", cfg.test_fraction},
                     {"split_seed", cfg.data_seed},
                     {"standardization", "per-feature z-score fitted on the train split; constant features -> 0"},
                     {"positive_label", cfg.csv.positive_label},
                     {"reference", "best-in-model fit on the test split"}};
  }
  nlohmann::json avg_meta = nlohmann::json::array();
  for (const auto& a : result.averaged)
    avg_meta.push_back({{"gamma", a.gamma},
                        {"lambda", a.lambda},
                        {"successful_replications", a.successful},
                        {"file", averaged_file_name(a.gamma, a.lambda)}});
  md["averaged"] = avg_meta;
  return result;
}

void write_experiment(const ExperimentResult& result, const std::string& outdir) {
  const std::filesystem::path dir(outdir);
  std::filesystem::create_directories(dir / "runs");
  for (const auto& run : result.runs)
    write_file_atomic((dir / "runs" / run_file_name(run.gamma, run.lambda, run.replication)).string(),
                      metric_csv_string(run.log));
  for (const auto& a : result.averaged)
    write_file_atomic((dir / averaged_file_name(a.gamma, a.lambda)).string(), metric_csv_string(a.log));
  write_file_atomic((dir / "metadata.json").string(), result.metadata.dump(2) + "\n");
}

std::vector<ScalingRow> scaling_summary(const MetricLog& at_gamma, const MetricLog& at_half, Index tail_window,
                                        const std::string& metric) {
  if (tail_window < 1) throw std::invalid_argument("tail window must be >= 1");

  auto tail_mean = [&](const MetricLog& log, const std::string& pred) -> std::optional<double> {
    auto rows = log.series(pred, metric);
    // prefer replication-averaged rows when a log mixes several series
    std::vector<MetricRow> mean_rows;
    for (const auto& r : rows)
      if (r.replication == "mean") mean_rows.push_back(r);
    if (!mean_rows.empty()) rows = std::move(mean_rows);
    if (rows.empty()) return std::nullopt;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].replication != rows[0].replication)
        throw std::invalid_argument("scaling: log mixes replications; pass a single run or an averaged log");
    if (static_cast<Index>(rows.size()) < tail_window)
      throw std::invalid_argument("scaling: tail window " + std::to_string(tail_window) + " exceeds the " +
                                  std::to_string(rows.size()) + " checkpoints of '" + pred + "'");
    double sum = 0.0;
    for (std::size_t i = rows.size() - static_cast<std::size_t>(tail_window); i < rows.size(); ++i)
      sum += rows[i].value;
    return sum / static_cast<double>(tail_window);
  };

  std::vector<std::string> preds;
  for (const auto& r : at_gamma.rows)
    if (r.metric == metric && std::find(preds.begin(), preds.end(), r.predictor) == preds.end())
      preds.push_back(r.predictor);

  std::vector<ScalingRow> out;
  for (const auto& p : preds) {
    const auto a = tail_mean(at_gamma, p);
    const auto b = tail_mean(at_half, p);
    if (!a || !b) continue;
    ScalingRow row;
    row.predictor = p;
    row.tail_gamma = *a;
    row.tail_half = *b;
    row.ratio = *a / *b;
    row.exponent = std::log2(std::abs(*a) / std::abs(*b));
    if (p == "param_avg" && (*a < 0.0 || *b < 0.0)) {
      row.flagged = true;
      row.note = "negative parameter-average excess: noise floor reached";
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_scaling_report(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os << "predictor,tail_gamma,tail_half_gamma,ratio,exponent,flag\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.6g,%.6g,%s\n", r.predictor.c_str(), r.tail_gamma, r.tail_half,
                  r.ratio, r.exponent, r.flagged ? r.note.c_str() : "");
    os << buf;
  }
  return os.str();
}

nlohmann::json BestLinearResult::to_json() const {
  nlohmann::json j{{"label", label},
                   {"value", value},
                   {"stderr", std_error},
                   {"theta", std::vector<double>(theta.data(), theta.data() + theta.size())}};
  if (f_star_star) j["f_star_star"] = *f_star_star;
  return j;
}

BestLinearResult best_linear(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentConfig one = cfg;
  one.replications = 1;
  if (!one.fstar) one.fstar = true;
  const SharedContext sh = make_shared_context(one);
  const ReplicationContext rc = make_replication(sh, 0);
  BestLinearResult res;
  res.theta = rc.theta_star;
  const bool kernel = cfg.features == FeatureKind::Nystrom;
  if (sh.oracle) {
    res.label = kernel ? "F* (Nystrom model, oracle)" : "F* (oracle)";
    res.value = rc.f_star->value;
    res.std_error = rc.f_star->std_error;
    res.f_star_star = sh.f_star_star.value;
  } else {
    res.label = kernel ? "held-out F** (Nystrom model fit on test split)" : "held-out F* (linear fit on test split)";
    res.value = rc.reference_nll;
  }
  return res;
}

}  // namespace glmavg
