#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "glmavg/family.hpp"
#include "glmavg/features.hpp"
#include "glmavg/predictor.hpp"
#include "glmavg/types.hpp"

namespace glmavg {

/// A synthetic problem with a known optimal natural-parameter function
/// eta**(x); mu**(x) = a'(eta**(x)).
struct OracleProblem {
  LinkFamily<double> fam;
  Index input_dim = 0;
  std::function<double(const VectorXd&)> eta_star_star;
  /// Draws n inputs as columns (input_dim x n), deterministic in seed.
  std::function<MatrixXd(Index n, std::uint64_t seed)> input_sampler;
};

/// Monte-Carlo draw set shared by every predictor evaluated against the same
/// problem (common random numbers).
struct OracleSet {
  LinkFamily<double> fam;
  MatrixXd x;
  VectorXd eta_ss;
  VectorXd mu_ss;

  Index size() const { return x.cols(); }
};

OracleSet make_oracle_set(const OracleProblem& problem, Index n_mc, std::uint64_t seed);

/// Monte-Carlo mean and its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// F(eta) = E_x[-mu**(x) eta(x) + a(eta(x))] for eta given at the set's points.
Estimate oracle_risk(const OracleSet& set, const VectorXd& eta);
Estimate oracle_risk(const OracleProblem& problem, const std::function<double(const VectorXd&)>& eta, Index n_mc,
                     std::uint64_t seed);

/// F** = F(eta**).
Estimate oracle_f_star_star(const OracleSet& set);
Estimate oracle_f_star_star(const OracleProblem& problem, Index n_mc, std::uint64_t seed);

/// F(eta) - F(eta_ref) with the standard error of the paired per-point
/// differences; no inter-predictor Monte-Carlo noise.
Estimate oracle_excess(const OracleSet& set, const VectorXd& eta, const VectorXd& eta_ref);

struct FitOptions {
  double grad_tol = 1e-8;
  Index max_iter = 100000;
};

struct FitResult {
  VectorXd theta;
  double objective = 0.0;
  double grad_norm = 0.0;
  Index iterations = 0;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, double grad_norm) : std::runtime_error(what), grad_norm_(grad_norm) {}
  double grad_norm() const { return grad_norm_; }

 private:
  double grad_norm_;
};

/// Minimizes (1/N) sum_i [-y_i phi_i.theta + a(phi_i.theta)] + lambda/2 |theta|^2
/// over feature columns `phi` (d x N). Responses may be soft (any value in
/// the closure of the moment domain), which lets the oracle objective be
/// minimized directly with y = mu**(x).
FitResult fit_best_linear(const LinkFamily<double>& fam, const MatrixXd& phi, const VectorXd& y, double lambda,
                          const FitOptions& opts = {});

/// Same, mapping raw inputs (columns of x) through `fm` first.
FitResult fit_best_linear(const LinkFamily<double>& fam, const FeatureMap<double>& fm, const MatrixXd& x,
                          const VectorXd& y, double lambda, const FitOptions& opts = {});

/// Mean per-sample held-out negative log-likelihood of a logistic predictor,
/// with predictions clamped to [1e-12, 1 - 1e-12].
double heldout_nll(const Predictor<double>& pred, const MatrixXd& x_test, const VectorXd& y_test);

/// Same on precomputed moment predictions.
double heldout_nll_moments(const VectorXd& mu, const VectorXd& y_test);

}  // namespace glmavg
