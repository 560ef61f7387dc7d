#pragma once

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "glmavg/family.hpp"
#include "glmavg/features.hpp"
#include "glmavg/trainer.hpp"
#include "glmavg/types.hpp"

namespace glmavg {

enum class PredictorKind { Last, ParamAvg, PredAvgExact, PredAvgTaylor };

inline constexpr PredictorKind kAllPredictorKinds[] = {PredictorKind::Last, PredictorKind::ParamAvg,
                                                       PredictorKind::PredAvgExact, PredictorKind::PredAvgTaylor};

inline std::string_view to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::Last: return "last";
    case PredictorKind::ParamAvg: return "param_avg";
    case PredictorKind::PredAvgExact: return "pred_avg_exact";
    case PredictorKind::PredAvgTaylor: return "pred_avg_taylor";
  }
  return "unknown";
}

inline PredictorKind parse_predictor_kind(std::string_view s) {
  for (auto k : kAllPredictorKinds)
    if (to_string(k) == s) return k;
  throw ConfigError("unknown predictor '" + std::string(s) + "'");
}

/// Immutable moment-scale prediction function snapshot.
///
///   Last           a'(phi . theta_n)
///   ParamAvg       a'(phi . mean)
///   PredAvgExact   mean_i a'(phi . theta_i) over the stored iterates
///   PredAvgTaylor  a'(phi . mean) + 1/2 phi^T cov phi a'''(phi . mean),
///                  clamped to the moment domain
template <typename Scalar>
class Predictor {
 public:
  using FeatureMapPtr = std::shared_ptr<const FeatureMap<Scalar>>;

  static Predictor last(LinkFamily<Scalar> fam, FeatureMapPtr fm, Vector<Scalar> theta) {
    return Predictor(PredictorKind::Last, fam, std::move(fm), std::move(theta));
  }
  static Predictor param_avg(LinkFamily<Scalar> fam, FeatureMapPtr fm, Vector<Scalar> mean) {
    return Predictor(PredictorKind::ParamAvg, fam, std::move(fm), std::move(mean));
  }
  /// Iterates are the columns of `history`.
  static Predictor pred_avg_exact(LinkFamily<Scalar> fam, FeatureMapPtr fm, Matrix<Scalar> history) {
    if (history.cols() == 0) throw std::invalid_argument("pred_avg_exact: empty iterate history");
    Predictor p(PredictorKind::PredAvgExact, fam, std::move(fm), Vector<Scalar>());
    p.history_ = std::make_shared<const Matrix<Scalar>>(std::move(history));
    p.check_dim(p.history_->rows());
    return p;
  }
  static Predictor pred_avg_taylor(LinkFamily<Scalar> fam, FeatureMapPtr fm, Vector<Scalar> mean,
                                   Matrix<Scalar> cov) {
    Predictor p(PredictorKind::PredAvgTaylor, fam, std::move(fm), std::move(mean));
    if (cov.rows() != p.theta_.size() || cov.cols() != p.theta_.size())
      throw std::invalid_argument("pred_avg_taylor: covariance shape mismatch");
    p.cov_ = std::move(cov);
    return p;
  }

  static Predictor from_state(PredictorKind kind, const TrainerState<Scalar>& state, LinkFamily<Scalar> fam,
                              FeatureMapPtr fm) {
    switch (kind) {
      case PredictorKind::Last: return last(fam, std::move(fm), state.theta);
      case PredictorKind::ParamAvg: return param_avg(fam, std::move(fm), state.mean());
      case PredictorKind::PredAvgExact:
        if (!state.history || state.history->empty())
          throw std::invalid_argument("pred_avg_exact needs a stored iterate history");
        return pred_avg_exact(fam, std::move(fm), Matrix<Scalar>(state.history->matrix()));
      case PredictorKind::PredAvgTaylor: return pred_avg_taylor(fam, std::move(fm), state.mean(), state.cov());
    }
    throw std::logic_error("unreachable predictor kind");
  }

  PredictorKind kind() const { return kind_; }
  const LinkFamily<Scalar>& family() const { return fam_; }
  const FeatureMap<Scalar>& feature_map() const { return *fm_; }
  const FeatureMapPtr& feature_map_ptr() const { return fm_; }

  /// Moment prediction at raw input x.
  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& x) const {
    return predict_features(fm_->map(x));
  }

  /// Moment prediction from an already-mapped feature vector.
  template <typename Derived>
  Scalar predict_features(const Eigen::MatrixBase<Derived>& phi) const {
    switch (kind_) {
      case PredictorKind::Last:
      case PredictorKind::ParamAvg: return fam_.a1(static_cast<Scalar>(phi.dot(theta_)));
      case PredictorKind::PredAvgExact: {
        const Vector<Scalar> etas = history_->transpose() * phi;
        Scalar sum = 0;
        for (Index i = 0; i < etas.size(); ++i) sum += fam_.a1(etas(i));
        return sum / Scalar(etas.size());
      }
      case PredictorKind::PredAvgTaylor: {
        const Scalar eta = phi.dot(theta_);
        const Scalar quad = phi.dot(cov_ * phi);
        return taylor_moment(eta, quad);
      }
    }
    throw std::logic_error("unreachable predictor kind");
  }

  /// Moment predictions for feature columns (output_dim x N).
  Vector<Scalar> predict_batch(const Matrix<Scalar>& phi) const {
    check_dim(phi.rows());
    Vector<Scalar> out(phi.cols());
    switch (kind_) {
      case PredictorKind::Last:
      case PredictorKind::ParamAvg: {
        const Vector<Scalar> eta = phi.transpose() * theta_;
        for (Index j = 0; j < eta.size(); ++j) out(j) = fam_.a1(eta(j));
        return out;
      }
      case PredictorKind::PredAvgExact: {
        constexpr Index kBlock = 256;
        const Scalar count = Scalar(history_->cols());
        for (Index j0 = 0; j0 < phi.cols(); j0 += kBlock) {
          const Index nb = std::min(kBlock, phi.cols() - j0);
          const Matrix<Scalar> etas = history_->transpose() * phi.middleCols(j0, nb);
          for (Index j = 0; j < nb; ++j) {
            Scalar sum = 0;
            for (Index i = 0; i < etas.rows(); ++i) sum += fam_.a1(etas(i, j));
            out(j0 + j) = sum / count;
          }
        }
        return out;
      }
      case PredictorKind::PredAvgTaylor: {
        const Vector<Scalar> eta = phi.transpose() * theta_;
        const Vector<Scalar> quad = (cov_ * phi).cwiseProduct(phi).colwise().sum().transpose();
        for (Index j = 0; j < eta.size(); ++j) out(j) = taylor_moment(eta(j), quad(j));
        return out;
      }
    }
    throw std::logic_error("unreachable predictor kind");
  }

  /// Natural-scale values eta(x) for feature columns: phi . theta directly for
  /// the parameter predictors, (a')^{-1} of the moment prediction otherwise.
  Vector<Scalar> natural_batch(const Matrix<Scalar>& phi) const {
    check_dim(phi.rows());
    if (kind_ == PredictorKind::Last || kind_ == PredictorKind::ParamAvg) return phi.transpose() * theta_;
    Vector<Scalar> mu = predict_batch(phi);
    for (Index j = 0; j < mu.size(); ++j) mu(j) = fam_.inverse_link(mu(j));
    return mu;
  }

  /// Parameter used by Last / ParamAvg / PredAvgTaylor (empty for PredAvgExact).
  const Vector<Scalar>& parameter() const { return theta_; }
  const Matrix<Scalar>& covariance() const { return cov_; }

 private:
  Predictor(PredictorKind kind, LinkFamily<Scalar> fam, FeatureMapPtr fm, Vector<Scalar> theta)
      : kind_(kind), fam_(fam), fm_(std::move(fm)), theta_(std::move(theta)) {
    if (!fm_) throw std::invalid_argument("predictor needs a feature map");
    if (kind != PredictorKind::PredAvgExact) check_dim(theta_.size());
  }

  void check_dim(Index d) const {
    if (d != fm_->output_dim())
      throw std::invalid_argument("predictor: dimension " + std::to_string(d) + " does not match feature map " +
                                  std::to_string(fm_->output_dim()));
  }

  Scalar taylor_moment(Scalar eta, Scalar quad) const {
    return fam_.clamp_moment(fam_.a1(eta) + Scalar(0.5) * quad * fam_.a3(eta));
  }

  PredictorKind kind_;
  LinkFamily<Scalar> fam_;
  FeatureMapPtr fm_;
  Vector<Scalar> theta_;
  Matrix<Scalar> cov_;
  std::shared_ptr<const Matrix<Scalar>> history_;
};

namespace detail {
template <typename Scalar>
void require_kind(const Predictor<Scalar>& p, PredictorKind k) {
  if (p.kind() != k)
    throw std::invalid_argument("predictor kind is " + std::string(to_string(p.kind())) + ", expected " +
                                std::string(to_string(k)));
}
}  // namespace detail

template <typename Scalar, typename Derived>
Scalar predict_last(const Predictor<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  detail::require_kind(p, PredictorKind::Last);
  return p(x);
}

template <typename Scalar, typename Derived>
Scalar predict_param_avg(const Predictor<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  detail::require_kind(p, PredictorKind::ParamAvg);
  return p(x);
}

template <typename Scalar, typename Derived>
Scalar predict_pred_avg_exact(const Predictor<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  detail::require_kind(p, PredictorKind::PredAvgExact);
  return p(x);
}

template <typename Scalar, typename Derived>
Scalar predict_pred_avg_taylor(const Predictor<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  detail::require_kind(p, PredictorKind::PredAvgTaylor);
  return p(x);
}

}  // namespace glmavg
