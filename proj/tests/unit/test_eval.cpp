#include <doctest.h>

#include <cmath>
#include <memory>

#include "glmavg/eval.hpp"
#include "glmavg/synth.hpp"
#include "glmavg/trainer.hpp"
#include "test_util.hpp"

using namespace glmavg;

namespace {

OracleProblem constant_problem(FamilyKind kind, double c) {
  return OracleProblem{LinkFamily<double>(kind), 2, [c](const VectorXd&) { return c; },
                       [](Index n, std::uint64_t seed) { return standard_normal_inputs(2, n, seed); }};
}

SynthSpec model1(std::uint64_t seed) {
  SynthSpec spec;
  spec.model = SynthModel::SinSum;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("oracle risk examples") {
  const auto zero = [](const VectorXd&) { return 0.0; };
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto risk = oracle_risk(oracle_problem(model1(0)), zero, 1000, seed);
    CHECK(risk.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(risk.std_error == doctest::Approx(0.0));
  }
  const auto gaussian = constant_problem(FamilyKind::Gaussian, 0.0);
  CHECK(oracle_risk(gaussian, [](const VectorXd&) { return 1.5; }, 100, 4).value ==
        doctest::Approx(1.125).epsilon(1e-15));
}

TEST_CASE("oracle F** examples") {
  CHECK(oracle_f_star_star(constant_problem(FamilyKind::Logistic, 0.0), 50, 1).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(oracle_f_star_star(constant_problem(FamilyKind::Gaussian, 1.7), 50, 1).value ==
        doctest::Approx(-0.5 * 1.7 * 1.7).epsilon(1e-15));
  CHECK(oracle_f_star_star(constant_problem(FamilyKind::Poisson, 0.0), 50, 1).value ==
        doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("non-finite eta names the offending point") {
  const auto problem = oracle_problem(model1(0));
  try {
    oracle_risk(problem, [](const VectorXd&) { return NAN; }, 10, 1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("x = (") != std::string::npos);
  }
  CHECK_THROWS(make_oracle_set(problem, 0, 1));
}

TEST_CASE("eta** minimizes the oracle risk on a shared draw set") {
  const auto set = make_oracle_set(oracle_problem(model1(0)), 20000, 9);
  const double fss = oracle_f_star_star(set).value;
  CHECK(oracle_risk(set, VectorXd::Zero(set.size())).value > fss);
  CHECK(oracle_risk(set, set.eta_ss * 1.1).value > fss);
  CHECK(oracle_risk(set, set.eta_ss.array() + 0.05).value > fss);
  // pointwise -mu eta + a(eta) is minimized at eta** for every x
  const VectorXd perturbed = set.eta_ss.array() + 0.3;
  const auto ex = oracle_excess(set, perturbed, set.eta_ss);
  CHECK(ex.value > 0.0);
  CHECK(ex.value == doctest::Approx(oracle_risk(set, perturbed).value - fss).epsilon(1e-12));
}

TEST_CASE("common random numbers: identical seeds share draws") {
  const auto problem = oracle_problem(model1(0));
  const auto a = make_oracle_set(problem, 500, 77);
  const auto b = make_oracle_set(problem, 500, 77);
  CHECK(a.x == b.x);
  CHECK(a.mu_ss == b.mu_ss);
  const auto ex = oracle_excess(a, a.eta_ss, b.eta_ss);
  CHECK(ex.value == 0.0);
  CHECK(ex.std_error == 0.0);
}

TEST_CASE("fit_best_linear examples") {
  const LinkFamily<double> gauss(FamilyKind::Gaussian), logit(FamilyKind::Logistic);
  const auto fit1 = fit_best_linear(gauss, MatrixXd::Ones(1, 1), VectorXd::Constant(1, 2.0), 0.0);
  CHECK(fit1.theta(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit1.grad_norm <= 1e-8);

  const auto fit2 = fit_best_linear(logit, MatrixXd::Ones(1, 2), (VectorXd(2) << 1.0, 0.0).finished(), 0.0);
  CHECK(std::abs(fit2.theta(0)) < 1e-12);
}

TEST_CASE("fit_best_linear on Model 1 stays above F**") {
  const auto spec = model1(3);
  SampleStream stream(spec, 10000);
  MatrixXd x(2, 10000);
  VectorXd y(10000);
  Sample<double> s;
  for (Index j = 0; stream.next(s); ++j) {
    x.col(j) = s.x;
    y(j) = s.y;
  }
  const LinkFamily<double> fam;
  const auto fit = fit_best_linear(fam, FeatureMap<double>::linear(2), x, y, 0.0);
  const auto set = make_oracle_set(oracle_problem(spec), 100000, 4);
  const auto ex = oracle_excess(set, set.x.transpose() * fit.theta, set.eta_ss);
  CHECK(ex.value > 3.0 * ex.std_error);
}

TEST_CASE("fit_best_linear soft labels and regularization") {
  const LinkFamily<double> fam;
  const MatrixXd phi = testing::gaussian_matrix(3, 400, 2);
  const VectorXd theta = (VectorXd(3) << 0.5, -1.0, 2.0).finished();
  VectorXd mu(400);
  for (Index i = 0; i < 400; ++i) mu(i) = fam.a1(phi.col(i).dot(theta));
  // mu as soft labels: the population optimum is theta itself
  const auto fit = fit_best_linear(fam, phi, mu, 0.0);
  CHECK((fit.theta - theta).norm() < 1e-6);

  const auto ridge = fit_best_linear(fam, phi, mu, 0.1);
  CHECK(ridge.theta.norm() < fit.theta.norm());
  // stationarity of the regularized objective
  VectorXd r(400);
  for (Index i = 0; i < 400; ++i) r(i) = fam.a1(phi.col(i).dot(ridge.theta)) - mu(i);
  CHECK((phi * r / 400.0 + 0.1 * ridge.theta).norm() <= 1e-8);
}

TEST_CASE("fit_best_linear reports non-convergence") {
  const LinkFamily<double> fam;
  MatrixXd phi(1, 4);
  phi << -2, -1, 1, 2;
  const VectorXd y = (VectorXd(4) << 0, 1, 0, 1).finished();
  FitOptions opts;
  opts.max_iter = 1;
  try {
    fit_best_linear(fam, phi, y, 0.0, opts);
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.grad_norm() > opts.grad_tol);
  }
  opts.max_iter = 50;
  CHECK_NOTHROW(fit_best_linear(fam, phi, y, 0.0, opts));
  CHECK_THROWS_AS(fit_best_linear(fam, phi, VectorXd::Zero(3), 0.0), std::invalid_argument);
}

TEST_CASE("held-out nll examples") {
  const LinkFamily<double> fam;
  const auto fm = std::make_shared<const FeatureMap<double>>(FeatureMap<double>::linear(2));
  const MatrixXd x = testing::gaussian_matrix(2, 10, 3);
  const VectorXd y = (VectorXd(10) << 0, 1, 1, 0, 1, 0, 0, 0, 1, 1).finished();
  CHECK(heldout_nll(Predictor<double>::param_avg(fam, fm, VectorXd::Zero(2)), x, y) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(heldout_nll_moments(y, y) == doctest::Approx(1e-12).epsilon(1e-3));
  CHECK(heldout_nll_moments(y, y) < 2.8e-11);
  CHECK_THROWS_AS(heldout_nll_moments(VectorXd(), VectorXd()), std::invalid_argument);
  CHECK_THROWS_AS(heldout_nll_moments(VectorXd::Constant(1, 0.5), VectorXd::Constant(1, 0.5)), DataError);
  const auto gauss = Predictor<double>::param_avg(LinkFamily<double>(FamilyKind::Gaussian), fm, VectorXd::Zero(2));
  CHECK_THROWS_AS(heldout_nll(gauss, x, y), std::invalid_argument);
}

TEST_CASE("property: excess nonnegativity up to Monte-Carlo noise") {
  const auto spec = model1(12);
  const auto set = make_oracle_set(oracle_problem(spec), 50000, 5);
  SampleStream stream(spec, 50000);
  SgdConfig<double> cfg;
  cfg.gamma = 0.5;
  cfg.theta0 = VectorXd::Zero(2);
  cfg.store_history = true;
  cfg.history_stride = 10;
  const LinkFamily<double> fam;
  const auto st = train_stream(cfg, fam, FeatureMap<double>::linear(2), stream, {}, {}).state;
  const auto fm = std::make_shared<const FeatureMap<double>>(FeatureMap<double>::linear(2));
  for (auto kind : kAllPredictorKinds) {
    const auto p = Predictor<double>::from_state(kind, st, fam, fm);
    const auto ex = oracle_excess(set, p.natural_batch(set.x), set.eta_ss);
    CHECK(ex.value >= -3.0 * ex.std_error);
  }
  // parameter averaging cannot beat the best linear predictor
  const auto best = fit_best_linear(fam, set.x, set.mu_ss, 0.0);
  const VectorXd eta_star = set.x.transpose() * best.theta;
  const auto pa = Predictor<double>::from_state(PredictorKind::ParamAvg, st, fam, fm);
  const auto ex = oracle_excess(set, pa.natural_batch(set.x), eta_star);
  CHECK(ex.value >= -3.0 * ex.std_error);
}
