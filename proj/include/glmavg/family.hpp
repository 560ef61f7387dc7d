#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

#include "glmavg/errors.hpp"
#include "glmavg/types.hpp"

namespace glmavg {

enum class FamilyKind { Logistic, Poisson, Gaussian };

/// One-dimensional exponential family q(y|eta) = exp(y*eta - a(eta)), base
/// measure 1. Exposes the log-partition a and its first three derivatives;
/// a' maps natural parameters to moments.
template <typename Scalar>
class LinkFamily {
 public:
  /// Largest natural parameter the Poisson family accepts before exp overflows.
  static constexpr Scalar kPoissonEtaMax = Scalar(700);
  /// Moment-domain clamp used wherever probabilities must stay valid.
  static constexpr Scalar kProbEps = Scalar(1e-12);

  constexpr explicit LinkFamily(FamilyKind kind = FamilyKind::Logistic) : kind_(kind) {}

  constexpr FamilyKind kind() const { return kind_; }

  std::string_view name() const {
    switch (kind_) {
      case FamilyKind::Logistic: return "logistic";
      case FamilyKind::Poisson: return "poisson";
      case FamilyKind::Gaussian: return "gaussian";
    }
    return "unknown";
  }

  Scalar a(Scalar t) const {
    check_eta(t);
    switch (kind_) {
      case FamilyKind::Logistic:
        // log(1 + e^t) without overflow for large |t|
        return std::max(t, Scalar(0)) + std::log1p(std::exp(-std::abs(t)));
      case FamilyKind::Poisson: return std::exp(t);
      case FamilyKind::Gaussian: return Scalar(0.5) * t * t;
    }
    return Scalar(0);
  }

  /// Moment map a'(t).
  Scalar a1(Scalar t) const {
    check_eta(t);
    switch (kind_) {
      case FamilyKind::Logistic: return sigmoid(t);
      case FamilyKind::Poisson: return std::exp(t);
      case FamilyKind::Gaussian: return t;
    }
    return Scalar(0);
  }

  Scalar a2(Scalar t) const {
    check_eta(t);
    switch (kind_) {
      case FamilyKind::Logistic: {
        const Scalar s = sigmoid(t);
        return s * (Scalar(1) - s);
      }
      case FamilyKind::Poisson: return std::exp(t);
      case FamilyKind::Gaussian: return Scalar(1);
    }
    return Scalar(0);
  }

  Scalar a3(Scalar t) const {
    check_eta(t);
    switch (kind_) {
      case FamilyKind::Logistic: {
        const Scalar s = sigmoid(t);
        return s * (Scalar(1) - s) * (Scalar(1) - Scalar(2) * s);
      }
      case FamilyKind::Poisson: return std::exp(t);
      case FamilyKind::Gaussian: return Scalar(0);
    }
    return Scalar(0);
  }

  /// (a')^{-1}: logit, log, identity. The argument is clamped into the
  /// moment domain first so that boundary predictions stay finite.
  Scalar inverse_link(Scalar mu) const {
    switch (kind_) {
      case FamilyKind::Logistic: {
        const Scalar p = clamp_moment(mu);
        return std::log(p) - std::log1p(-p);
      }
      case FamilyKind::Poisson: return std::log(clamp_moment(mu));
      case FamilyKind::Gaussian: return mu;
    }
    return mu;
  }

  Scalar clamp_moment(Scalar mu) const {
    switch (kind_) {
      case FamilyKind::Logistic: return std::clamp(mu, kProbEps, Scalar(1) - kProbEps);
      case FamilyKind::Poisson: return std::max(mu, std::numeric_limits<Scalar>::min());
      case FamilyKind::Gaussian: return mu;
    }
    return mu;
  }

  bool in_support(Scalar y) const {
    if (!std::isfinite(y)) return false;
    switch (kind_) {
      case FamilyKind::Logistic: return y == Scalar(0) || y == Scalar(1);
      case FamilyKind::Poisson: return y >= Scalar(0) && std::floor(y) == y;
      case FamilyKind::Gaussian: return true;
    }
    return false;
  }

  static Scalar sigmoid(Scalar t) {
    if (t >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-t));
    const Scalar e = std::exp(t);
    return e / (Scalar(1) + e);
  }

  friend constexpr bool operator==(const LinkFamily&, const LinkFamily&) = default;

 private:
  void check_eta(Scalar t) const {
    if (!std::isfinite(t)) throw NumericError("non-finite natural parameter");
    if (kind_ == FamilyKind::Poisson && t > kPoissonEtaMax)
      throw NumericError("Poisson natural parameter " + std::to_string(static_cast<double>(t)) +
                         " exceeds exp overflow guard");
  }

  FamilyKind kind_;
};

/// One observation (x, y); y must lie in the family's support.
template <typename Scalar>
struct Sample {
  Vector<Scalar> x;
  Scalar y = Scalar(0);
};

/// Per-sample negative log-likelihood -y*eta + a(eta).
template <typename Scalar>
Scalar loss(const LinkFamily<Scalar>& fam, Scalar eta, Scalar y) {
  return -y * eta + fam.a(eta);
}

/// d/deta of loss: a'(eta) - y. Multiply by Phi(x) for the parameter gradient.
template <typename Scalar>
Scalar loss_grad_scalar(const LinkFamily<Scalar>& fam, Scalar eta, Scalar y) {
  return fam.a1(eta) - y;
}

inline FamilyKind parse_family_kind(std::string_view name) {
  if (name == "logistic") return FamilyKind::Logistic;
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "gaussian") return FamilyKind::Gaussian;
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

}  // namespace glmavg
