#pragma once

// Kernel SGD written in the coefficient form theta_n = sum_t alpha_t Phi(x_t):
//   alpha_n = -gamma [a'(sum_{t<n} alpha_t k(x_t, x_n)) - y_n],
//   alpha_t <- (1 - gamma lambda) alpha_t for t < n.
// O(n^2) time and O(n) memory; used only as a reference for small n.

#include <vector>

#include "glmavg/family.hpp"
#include "glmavg/features.hpp"

namespace glmavg::testing {

class KernelAlphaOracle {
 public:
  KernelAlphaOracle(LinkFamily<double> fam, Kernel<double> kernel, double gamma, double lambda)
      : fam_(fam), kernel_(kernel), gamma_(gamma), lambda_(lambda) {}

  void step(const VectorXd& x, double y) {
    const double eta = natural(x);
    const double shrink = 1.0 - gamma_ * lambda_;
    for (double& a : alpha_) a *= shrink;
    alpha_.push_back(-gamma_ * (fam_.a1(eta) - y));
    points_.push_back(x);
  }

  /// sum_t alpha_t k(x_t, x)
  double natural(const VectorXd& x) const {
    double s = 0.0;
    for (std::size_t t = 0; t < alpha_.size(); ++t) s += alpha_[t] * kernel_(points_[t], x);
    return s;
  }

  double predict(const VectorXd& x) const { return fam_.a1(natural(x)); }
  const std::vector<double>& alpha() const { return alpha_; }

 private:
  LinkFamily<double> fam_;
  Kernel<double> kernel_;
  double gamma_;
  double lambda_;
  std::vector<double> alpha_;
  std::vector<VectorXd> points_;
};

}  // namespace glmavg::testing
