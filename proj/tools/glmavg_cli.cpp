// glmavg: run averaging experiments, summarize step-size scaling, fit references.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "glmavg/errors.hpp"
#include "glmavg/experiment.hpp"
#include "glmavg/metric_log.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFailedRuns = 3;
constexpr int kExitData = 4;

glmavg::ExperimentConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv;
  {
    const auto base = glmavg::load_config(path);
    kv = base.raw;
  }
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw glmavg::ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return glmavg::config_from_map(kv);
}

int cmd_run(const std::string& config, const std::vector<std::string>& sets, std::string output, unsigned threads) {
  const auto cfg = load_with_overrides(config, sets);
  if (output.empty()) output = cfg.output;
  if (output.empty()) throw glmavg::ConfigError("no output directory: set `output` in the config or pass --out");
  const auto result = glmavg::run_experiment(cfg, threads);
  glmavg::write_experiment(result, output);
  int failed = 0;
  for (const auto& r : result.runs) {
    if (r.status == "ok") continue;
    ++failed;
    std::fprintf(stderr, "run gamma=%g lambda=%g rep=%d %s: %s\n", r.gamma, r.lambda, r.replication, r.status.c_str(),
                 r.message.c_str());
  }
  std::printf("wrote %zu runs to %s (%d failed)\n", result.runs.size(), output.c_str(), failed);
  return failed ? kExitFailedRuns : 0;
}

int cmd_scaling(const std::string& a, const std::string& b, glmavg::Index tail, const std::string& metric) {
  const auto rows =
      glmavg::scaling_summary(glmavg::read_metric_csv_file(a), glmavg::read_metric_csv_file(b), tail, metric);
  if (rows.empty()) throw glmavg::DataError("no predictor carries metric '" + metric + "' in both logs");
  std::cout << glmavg::format_scaling_report(rows);
  return 0;
}

int cmd_bestlinear(const std::string& config, const std::vector<std::string>& sets, std::string output) {
  const auto cfg = load_with_overrides(config, sets);
  if (output.empty()) output = cfg.output;
  const auto res = glmavg::best_linear(cfg);
  const std::string text = res.to_json().dump(2) + "\n";
  if (!output.empty()) {
    const auto path = (std::filesystem::path(output) / "bestlinear.json").string();
    glmavg::write_file_atomic(path, text);
    std::fprintf(stderr, "cached reference in %s\n", path.c_str());
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming GLM training with parameter and prediction averaging"};
  app.require_subcommand(1);

  unsigned threads = 0;
  app.add_option("-j,--threads", threads, "worker threads (default: GLMAVG_THREADS or all cores)");

  std::string run_config, run_out;
  std::vector<std::string> run_sets;
  auto* run = app.add_subcommand("run", "train and evaluate every configured (gamma, lambda, replication)");
  run->add_option("config", run_config, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out", run_out, "output directory (overrides `output`)");
  run->add_option("-s,--set", run_sets, "override a config key, key=value");

  std::string log_a, log_b, metric = "excess_vs_fstar";
  glmavg::Index tail = 5;
  auto* scaling = app.add_subcommand("scaling", "step-size exponent from logs at gamma and gamma/2");
  scaling->add_option("log_gamma", log_a, "metric CSV at gamma")->required()->check(CLI::ExistingFile);
  scaling->add_option("log_half", log_b, "metric CSV at gamma/2")->required()->check(CLI::ExistingFile);
  scaling->add_option("-t,--tail", tail, "tail window in checkpoints")->capture_default_str();
  scaling->add_option("-m,--metric", metric, "metric column")->capture_default_str();

  std::string bl_config, bl_out;
  std::vector<std::string> bl_sets;
  auto* best = app.add_subcommand("bestlinear", "fit and cache the best-in-model reference");
  best->add_option("config", bl_config, "config file")->required()->check(CLI::ExistingFile);
  best->add_option("-o,--out", bl_out, "directory for bestlinear.json (overrides `output`)");
  best->add_option("-s,--set", bl_sets, "override a config key, key=value");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_config, run_sets, run_out, threads);
    if (*scaling) return cmd_scaling(log_a, log_b, tail, metric);
    if (*best) return cmd_bestlinear(bl_config, bl_sets, bl_out);
  } catch (const glmavg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const glmavg::DivergenceError& e) {
    std::fprintf(stderr, "diverged at iteration %lld: %s\n", static_cast<long long>(e.iteration()), e.what());
    return kExitFailedRuns;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
