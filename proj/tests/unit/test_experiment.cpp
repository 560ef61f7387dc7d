#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "glmavg/experiment.hpp"
#include "test_util.hpp"

using namespace glmavg;

namespace {

ExperimentConfig small_synth(std::map<std::string, std::string> extra = {}) {
  std::map<std::string, std::string> kv{{"problem", "synth"},
                                        {"synth.model", "sinsum"},
                                        {"n", "2000"},
                                        {"gamma", "0.5, 0.1"},
                                        {"replications", "2"},
                                        {"seed", "5"},
                                        {"eval.n_mc", "2000"},
                                        {"checkpoints.count", "8"},
                                        {"predictors", "last, param_avg, pred_avg_exact, pred_avg_taylor"}};
  for (auto& [k, v] : extra) kv[k] = v;
  return config_from_map(kv);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(const std::string& args) {
  const char* cli = std::getenv("GLMAVG_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "GLMAVG_CLI not set");
  const int status = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(R"(# comment
problem = synth
synth.model = kernel_ratio   # trailing comment
features = nystrom
kernel.kind = laplacian
kernel.sigma = d
nystrom.m = 20
gamma = 0.5, 0.25
lambda = 1e-4,1e-6
predictors = param_avg, pred_avg_taylor
replications = 3
)");
  const auto cfg = parse_config(in);
  CHECK(cfg.synth.model == SynthModel::KernelRatio);
  CHECK(cfg.synth.dim == 5);
  CHECK(cfg.features == FeatureKind::Nystrom);
  CHECK_FALSE(cfg.kernel_sigma.has_value());
  CHECK(cfg.nystrom_m == 20);
  CHECK(cfg.gammas == std::vector<double>{0.5, 0.25});
  CHECK(cfg.lambdas == std::vector<double>{1e-4, 1e-6});
  CHECK(cfg.predictors.size() == 2);
  CHECK(cfg.replications == 3);
  CHECK_FALSE(cfg.wants_fstar());
}

TEST_CASE("config errors") {
  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  CHECK_THROWS_AS(bad("gamma = \n"), ConfigError);
  CHECK_THROWS_AS(bad("replications = 0\n"), ConfigError);
  CHECK_THROWS_AS(bad("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(bad("unknown.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(bad("gamma = fast\n"), ConfigError);
  CHECK_THROWS_AS(bad("family = poisson\n"), ConfigError);  // sinsum is logistic
  CHECK_THROWS_AS(bad("problem = dataset\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent.cfg"), ConfigError);
}

TEST_CASE("config hash ignores the output directory only") {
  auto a = small_synth({{"output", "/tmp/a"}});
  auto b = small_synth({{"output", "/tmp/b"}});
  auto c = small_synth({{"seed", "6"}});
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("run produces one series per predictor and checkpoint") {
  const auto cfg = small_synth();
  const auto res = run_experiment(cfg, 2);
  REQUIRE(res.runs.size() == 4);
  CHECK_FALSE(res.any_failed());
  const auto cps = res.metadata["checkpoints"].get<std::vector<Index>>();
  CHECK(cps.front() == 10);
  CHECK(cps.back() == 2000);
  for (const auto& run : res.runs) {
    CHECK(run.log.series_ordered());
    CHECK(run.log.series("pred_avg_taylor", "excess_vs_fstar").size() == cps.size());
    CHECK(run.log.series("last", "stderr_vs_fstarstar").size() == cps.size());
  }
  // replications share the seed across step sizes
  CHECK(res.runs[0].seed == res.runs[2].seed);
  CHECK(res.runs[0].seed != res.runs[1].seed);
}

TEST_CASE("property: averaged rows are the arithmetic mean of replications") {
  const auto res = run_experiment(small_synth(), 1);
  for (const auto& avg : res.averaged) {
    std::vector<const RunRecord*> reps;
    for (const auto& r : res.runs)
      if (r.gamma == avg.gamma && r.lambda == avg.lambda) reps.push_back(&r);
    REQUIRE(reps.size() == 2);
    for (std::size_t i = 0; i < avg.log.rows.size(); ++i) {
      const double mean = 0.5 * (reps[0]->log.rows[i].value + reps[1]->log.rows[i].value);
      CHECK(std::abs(avg.log.rows[i].value - mean) <= 1e-12);
      CHECK(avg.log.rows[i].replication == "mean");
    }
  }
}

TEST_CASE("gamma zero keeps every predictor constant") {
  const auto res = run_experiment(small_synth({{"gamma", "0"}, {"replications", "1"}}), 1);
  const auto& log = res.runs.at(0).log;
  for (auto kind : kAllPredictorKinds) {
    CAPTURE(to_string(kind));
    const auto s = log.series(std::string(to_string(kind)), "risk");
    REQUIRE(!s.empty());
    for (const auto& r : s) CHECK(r.value == s.front().value);
    CHECK(s.front().value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("divergent runs are recorded and the rest continue") {
  const auto cfg = config_from_map({{"problem", "synth"},
                                    {"synth.model", "wellspecified"},
                                    {"family", "gaussian"},
                                    {"synth.theta_true", "1, -1"},
                                    {"n", "500"},
                                    {"gamma", "5, 0.05"},
                                    {"eval.n_mc", "500"},
                                    {"checkpoints.count", "5"}});
  const auto res = run_experiment(cfg, 1);
  REQUIRE(res.runs.size() == 2);
  CHECK(res.runs[0].status == "diverged");
  CHECK(res.runs[0].message.find("iteration") != std::string::npos);
  CHECK(res.runs[1].status == "ok");
  CHECK(res.any_failed());
  CHECK(res.averaged[0].successful == 0);
  CHECK(res.averaged[1].successful == 1);
  CHECK(res.metadata["failed"] == true);
}

TEST_CASE("property: reruns write identical bytes") {
  const testing::TempDir dir("exp");
  const auto cfg = small_synth({{"replications", "1"}});
  write_experiment(run_experiment(cfg, 1), dir.file("a"));
  write_experiment(run_experiment(cfg, 2), dir.file("b"));
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir.path / "a");
    CHECK(slurp(entry.path()) == slurp(dir.path / "b" / rel));
  }
  CHECK(std::filesystem::exists(dir.path / "a" / "metadata.json"));
  CHECK(std::filesystem::exists(dir.path / "a" / "runs" / run_file_name(0.5, 0.0, 0)));
  CHECK(std::filesystem::exists(dir.path / "a" / averaged_file_name(0.1, 0.0)));
}

TEST_CASE("nystrom run on the kernel model") {
  const auto cfg = config_from_map({{"problem", "synth"},
                                    {"synth.model", "kernel_ratio"},
                                    {"features", "nystrom"},
                                    {"nystrom.m", "15"},
                                    {"n", "600"},
                                    {"gamma", "0.5"},
                                    {"lambda", "1e-4"},
                                    {"eval.n_mc", "500"},
                                    {"checkpoints.count", "4"}});
  const auto res = run_experiment(cfg, 1);
  REQUIRE(res.runs.size() == 1);
  CHECK(res.runs[0].status == "ok");
  CHECK(res.metadata["references"][0]["feature_dim"] == 15);
  CHECK(res.runs[0].log.series("param_avg", "excess_vs_fstar").empty());
  CHECK(res.runs[0].log.series("param_avg", "excess_vs_fstarstar").size() == 4);
}

TEST_CASE("dataset run") {
  const testing::TempDir dir("ds");
  {
    std::ofstream out(dir.file("toy.csv"));
    const MatrixXd x = testing::gaussian_matrix(3, 400, 1);
    for (Index j = 0; j < x.cols(); ++j)
      out << x(0, j) << ',' << x(1, j) << ',' << x(2, j) << ',' << (x(0, j) + 0.5 * x(1, j) > 0 ? "s" : "b") << '\n';
  }
  const auto cfg = config_from_map({{"problem", "dataset"},
                                    {"data.path", dir.file("toy.csv")},
                                    {"data.positive_label", "s"},
                                    {"data.cache", dir.file("toy.bin")},
                                    {"gamma", "0.5"},
                                    {"replications", "2"},
                                    {"reference.lambda", "1e-3"},
                                    {"checkpoints.count", "5"}});
  const auto res = run_experiment(cfg, 1);
  REQUIRE(res.runs.size() == 2);
  CHECK_FALSE(res.any_failed());
  CHECK(std::filesystem::exists(dir.file("toy.bin")));
  CHECK(res.metadata["stream_length"] == 320);
  const auto nll = res.runs[0].log.series("pred_avg_taylor", "nll");
  REQUIRE(nll.size() == 5);
  CHECK(nll.back().value < std::log(2.0));
  CHECK(res.runs[0].log.series("param_avg", "excess_vs_best").size() == 5);

  const auto best = best_linear(cfg);
  CHECK(best.value > 0.0);
  CHECK(best.value < nll.back().value + 0.1);
}

TEST_CASE("scaling summary") {
  MetricLog a, b;
  for (int i = 1; i <= 6; ++i) {
    a.add(i, "param_avg", "excess_vs_fstar", 4.0e-3, "mean");
    b.add(i, "param_avg", "excess_vs_fstar", 1.0e-3, "mean");
    a.add(i, "pred_avg_taylor", "excess_vs_fstar", -2.0e-3, "mean");
    b.add(i, "pred_avg_taylor", "excess_vs_fstar", -1.0e-3, "mean");
  }
  auto rows = scaling_summary(a, b, 5);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].predictor == "param_avg");
  CHECK(rows[0].exponent == doctest::Approx(2.0));
  CHECK_FALSE(rows[0].flagged);
  CHECK(rows[1].exponent == doctest::Approx(1.0));

  const auto same = scaling_summary(a, a, 3);
  for (const auto& r : same) CHECK(r.exponent == 0.0);

  MetricLog neg;
  for (int i = 1; i <= 6; ++i) neg.add(i, "param_avg", "excess_vs_fstar", -1e-5, "mean");
  rows = scaling_summary(neg, b, 5);
  CHECK(rows.at(0).flagged);
  CHECK(format_scaling_report(rows).find("noise floor") != std::string::npos);

  CHECK_THROWS_AS(scaling_summary(a, b, 7), std::invalid_argument);
  CHECK_THROWS_AS(scaling_summary(a, b, 0), std::invalid_argument);
}

TEST_CASE("cli end to end") {
  const testing::TempDir dir("cli");
  {
    std::ofstream cfg(dir.file("exp.cfg"));
    cfg << "problem = synth\nsynth.model = sinsum\nn = 1000\ngamma = 0.2, 0.1\neval.n_mc = 1000\n"
        << "checkpoints.count = 6\noutput = " << dir.file("out") << "\n";
    std::ofstream bad(dir.file("bad.cfg"));
    bad << "gamma = -1\n";
    std::ofstream div(dir.file("div.cfg"));
    div << "problem = synth\nsynth.model = wellspecified\nfamily = gaussian\nsynth.theta_true = 1,1\n"
        << "n = 300\ngamma = 10\neval.n_mc = 100\noutput = " << dir.file("div") << "\n";
  }
  CHECK(run_cli("run " + dir.file("exp.cfg")) == 0);
  CHECK(std::filesystem::exists(dir.file("out/avg_g0.2_l0.csv")));
  CHECK(run_cli("scaling " + dir.file("out/avg_g0.2_l0.csv") + " " + dir.file("out/avg_g0.1_l0.csv") +
                " --tail 3") == 0);
  CHECK(run_cli("bestlinear " + dir.file("exp.cfg")) == 0);
  CHECK(std::filesystem::exists(dir.file("out/bestlinear.json")));
  CHECK(run_cli("run " + dir.file("bad.cfg")) == 2);
  CHECK(run_cli("run " + dir.file("div.cfg")) == 3);
  CHECK(std::filesystem::exists(dir.file("div/metadata.json")));
  CHECK(run_cli("scaling " + dir.file("out/avg_g0.2_l0.csv") + " " + dir.file("out/avg_g0.1_l0.csv") +
                " --tail 99") != 0);
  CHECK(run_cli("") != 0);
}
