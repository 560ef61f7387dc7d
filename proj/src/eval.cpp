#include "glmavg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

namespace glmavg {

namespace {

Estimate mean_and_stderr(const VectorXd& v) {
  const Index n = v.size();
  Estimate e;
  e.value = v.mean();
  if (n > 1) {
    const double var = (v.array() - e.value).square().sum() / static_cast<double>(n - 1);
    e.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return e;
}

std::string describe_point(const VectorXd& x) {
  std::ostringstream os;
  os << '(';
  for (Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ')';
  return os.str();
}

VectorXd pointwise_risk(const OracleSet& set, const VectorXd& eta) {
  if (eta.size() != set.size()) throw std::invalid_argument("oracle risk: eta size does not match the draw set");
  VectorXd r(eta.size());
  for (Index i = 0; i < eta.size(); ++i) {
    if (!std::isfinite(eta(i)))
      throw NumericError("non-finite natural parameter at x = " + describe_point(set.x.col(i)));
    r(i) = -set.mu_ss(i) * eta(i) + set.fam.a(eta(i));
  }
  return r;
}

}  // namespace

OracleSet make_oracle_set(const OracleProblem& problem, Index n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("oracle set needs n_mc >= 1");
  OracleSet set{problem.fam, problem.input_sampler(n_mc, seed), VectorXd(n_mc), VectorXd(n_mc)};
  for (Index i = 0; i < n_mc; ++i) {
    set.eta_ss(i) = problem.eta_star_star(set.x.col(i));
    set.mu_ss(i) = problem.fam.a1(set.eta_ss(i));
  }
  return set;
}

Estimate oracle_risk(const OracleSet& set, const VectorXd& eta) { return mean_and_stderr(pointwise_risk(set, eta)); }

Estimate oracle_risk(const OracleProblem& problem, const std::function<double(const VectorXd&)>& eta, Index n_mc,
                     std::uint64_t seed) {
  const OracleSet set = make_oracle_set(problem, n_mc, seed);
  VectorXd values(set.size());
  for (Index i = 0; i < set.size(); ++i) values(i) = eta(set.x.col(i));
  return oracle_risk(set, values);
}

Estimate oracle_f_star_star(const OracleSet& set) { return oracle_risk(set, set.eta_ss); }

Estimate oracle_f_star_star(const OracleProblem& problem, Index n_mc, std::uint64_t seed) {
  return oracle_f_star_star(make_oracle_set(problem, n_mc, seed));
}

Estimate oracle_excess(const OracleSet& set, const VectorXd& eta, const VectorXd& eta_ref) {
  return mean_and_stderr(pointwise_risk(set, eta) - pointwise_risk(set, eta_ref));
}

namespace {

struct Objective {
  const LinkFamily<double>& fam;
  const MatrixXd& phi;
  const VectorXd& y;
  double lambda;

  double value(const VectorXd& theta) const {
    const VectorXd eta = phi.transpose() * theta;
    double sum = 0.0;
    for (Index i = 0; i < eta.size(); ++i) sum += loss(fam, eta(i), y(i));
    return sum / static_cast<double>(eta.size()) + 0.5 * lambda * theta.squaredNorm();
  }

  /// Gradient and Hessian at theta.
  void derivatives(const VectorXd& theta, VectorXd& grad, MatrixXd& hess) const {
    const VectorXd eta = phi.transpose() * theta;
    const double inv_n = 1.0 / static_cast<double>(eta.size());
    VectorXd r(eta.size()), w(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      r(i) = loss_grad_scalar(fam, eta(i), y(i));
      w(i) = fam.a2(eta(i));
    }
    grad = inv_n * (phi * r) + lambda * theta;
    hess = inv_n * (phi * w.asDiagonal() * phi.transpose());
    hess.diagonal().array() += lambda;
  }
};

}  // namespace

FitResult fit_best_linear(const LinkFamily<double>& fam, const MatrixXd& phi, const VectorXd& y, double lambda,
                          const FitOptions& opts) {
  if (phi.cols() != y.size() || phi.cols() == 0) throw std::invalid_argument("fit_best_linear: bad data shape");
  if (!phi.allFinite() || !y.allFinite()) throw NumericError("fit_best_linear: non-finite data");
  if (lambda < 0.0) throw std::invalid_argument("fit_best_linear: lambda must be >= 0");

  // Damped Newton with Armijo backtracking; falls back to the gradient
  // direction when the Newton direction is not a descent direction.
  const Objective obj{fam, phi, y, lambda};
  const Index d = phi.rows();
  FitResult res;
  res.theta = VectorXd::Zero(d);
  res.objective = obj.value(res.theta);
  VectorXd grad;
  MatrixXd hess;
  for (Index it = 0; it < opts.max_iter; ++it) {
    obj.derivatives(res.theta, grad, hess);
    res.grad_norm = grad.norm();
    res.iterations = it;
    if (res.grad_norm <= opts.grad_tol) return res;

    const double ridge = 1e-12 * std::max(1.0, hess.diagonal().maxCoeff());
    hess.diagonal().array() += ridge;
    Eigen::LDLT<MatrixXd> ldlt(hess);
    VectorXd dir = -grad;
    if (ldlt.info() == Eigen::Success) {
      VectorXd nd = ldlt.solve(-grad);
      if (nd.allFinite() && nd.dot(grad) < 0.0) dir = std::move(nd);
    }

    const double slope = dir.dot(grad);
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const VectorXd cand = res.theta + t * dir;
      double f;
      try {
        f = obj.value(cand);
      } catch (const NumericError&) {
        f = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(f) && f <= res.objective + 1e-4 * t * slope) {
        res.theta = cand;
        res.objective = f;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // no representable decrease left; accept if the gradient is at rounding level
      if (res.grad_norm <= std::max(opts.grad_tol, 1e-6)) return res;
      throw FitError("fit_best_linear: line search failed with gradient norm " + std::to_string(res.grad_norm),
                     res.grad_norm);
    }
  }
  obj.derivatives(res.theta, grad, hess);
  res.grad_norm = grad.norm();
  res.iterations = opts.max_iter;
  if (res.grad_norm <= opts.grad_tol) return res;
  throw FitError("fit_best_linear: no convergence after " + std::to_string(opts.max_iter) +
                     " iterations, gradient norm " + std::to_string(res.grad_norm),
                 res.grad_norm);
}

FitResult fit_best_linear(const LinkFamily<double>& fam, const FeatureMap<double>& fm, const MatrixXd& x,
                          const VectorXd& y, double lambda, const FitOptions& opts) {
  return fit_best_linear(fam, fm.map_columns(x), y, lambda, opts);
}

double heldout_nll_moments(const VectorXd& mu, const VectorXd& y_test) {
  if (y_test.size() == 0) throw std::invalid_argument("heldout_nll: empty test set");
  if (mu.size() != y_test.size()) throw std::invalid_argument("heldout_nll: size mismatch");
  constexpr double eps = LinkFamily<double>::kProbEps;
  double sum = 0.0;
  for (Index i = 0; i < y_test.size(); ++i) {
    const double p = std::clamp(mu(i), eps, 1.0 - eps);
    if (y_test(i) == 1.0)
      sum -= std::log(p);
    else if (y_test(i) == 0.0)
      sum -= std::log1p(-p);
    else
      throw DataError("heldout_nll: label " + std::to_string(y_test(i)) + " is not in {0,1}");
  }
  return sum / static_cast<double>(y_test.size());
}

double heldout_nll(const Predictor<double>& pred, const MatrixXd& x_test, const VectorXd& y_test) {
  if (pred.family().kind() != FamilyKind::Logistic) throw std::invalid_argument("heldout_nll needs the logistic family");
  if (y_test.size() == 0) throw std::invalid_argument("heldout_nll: empty test set");
  return heldout_nll_moments(pred.predict_batch(pred.feature_map().map_columns(x_test)), y_test);
}

}  // namespace glmavg
