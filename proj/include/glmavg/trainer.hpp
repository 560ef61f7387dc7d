#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "glmavg/errors.hpp"
#include "glmavg/family.hpp"
#include "glmavg/features.hpp"
#include "glmavg/metric_log.hpp"
#include "glmavg/types.hpp"

namespace glmavg {

template <typename Scalar>
struct SgdConfig {
  Scalar gamma = Scalar(0.1);
  Scalar lambda = Scalar(0);
  Vector<Scalar> theta0;
  bool store_history = false;
  Index history_stride = 1;
  /// Iterates with index < burn_in are excluded from the running moments.
  Index burn_in = 0;
  /// Divergence guard on |theta|.
  Scalar max_norm = Scalar(1e8);

  void validate() const {
    if (!(gamma >= Scalar(0)) || !std::isfinite(gamma)) throw ConfigError("gamma must be finite and >= 0");
    if (!(lambda >= Scalar(0)) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (history_stride < 1) throw ConfigError("history stride must be >= 1");
    if (burn_in < 0) throw ConfigError("burn-in must be >= 0");
    if (theta0.size() < 1) throw ConfigError("theta0 must be set");
  }
};

/// Running mean and population covariance (divide by count) of a vector
/// sequence, updated one vector at a time. Only the lower triangle of the
/// scatter matrix is maintained.
template <typename Scalar>
class RunningMoments {
 public:
  RunningMoments() = default;
  explicit RunningMoments(Index dim) : mean_(Vector<Scalar>::Zero(dim)), scatter_(Matrix<Scalar>::Zero(dim, dim)) {}

  template <typename Derived>
  void push(const Eigen::MatrixBase<Derived>& v) {
    ++count_;
    delta_ = v - mean_;
    mean_ += delta_ / Scalar(count_);
    // (v - old_mean)(v - new_mean)^T == ((k-1)/k) delta delta^T
    scatter_.template selfadjointView<Eigen::Lower>().rankUpdate(delta_, Scalar(count_ - 1) / Scalar(count_));
  }

  Index count() const { return count_; }
  Index dim() const { return mean_.size(); }
  const Vector<Scalar>& mean() const { return mean_; }

  Matrix<Scalar> covariance() const {
    if (count_ == 0) return Matrix<Scalar>::Zero(dim(), dim());
    Matrix<Scalar> cov = scatter_.template selfadjointView<Eigen::Lower>();
    cov /= Scalar(count_);
    return cov;
  }

 private:
  Index count_ = 0;
  Vector<Scalar> mean_;
  Matrix<Scalar> scatter_;
  Vector<Scalar> delta_;
};

/// Stored iterates, one column per entry, contiguous.
template <typename Scalar>
class IterateHistory {
 public:
  IterateHistory() = default;
  explicit IterateHistory(Index dim) : dim_(dim) {}

  template <typename Derived>
  void push(const Eigen::MatrixBase<Derived>& v) {
    buf_.insert(buf_.end(), v.derived().data(), v.derived().data() + dim_);
  }

  Index dim() const { return dim_; }
  Index size() const { return dim_ == 0 ? 0 : static_cast<Index>(buf_.size()) / dim_; }
  bool empty() const { return buf_.empty(); }

  Eigen::Map<const Matrix<Scalar>> matrix() const { return {buf_.data(), dim_, size()}; }
  auto column(Index i) const { return matrix().col(i); }

 private:
  Index dim_ = 0;
  std::vector<Scalar> buf_;
};

template <typename Scalar>
struct TrainerState {
  Vector<Scalar> theta;
  RunningMoments<Scalar> moments;
  Index n = 0;
  std::optional<IterateHistory<Scalar>> history;

  static TrainerState initial(const SgdConfig<Scalar>& cfg) {
    cfg.validate();
    TrainerState s;
    s.theta = cfg.theta0;
    s.moments = RunningMoments<Scalar>(cfg.theta0.size());
    if (cfg.burn_in == 0) s.moments.push(s.theta);
    if (cfg.store_history) {
      s.history.emplace(cfg.theta0.size());
      s.history->push(s.theta);
    }
    return s;
  }

  Index dim() const { return theta.size(); }

  /// Running mean of the included iterates; theta itself while none are included.
  const Vector<Scalar>& mean() const { return moments.count() > 0 ? moments.mean() : theta; }
  Matrix<Scalar> cov() const { return moments.covariance(); }
};

/// One step on a precomputed feature vector:
///   theta <- theta - gamma * [(a'(phi.theta) - y) phi + lambda theta].
template <typename Scalar, typename Derived>
void step_features(TrainerState<Scalar>& state, const SgdConfig<Scalar>& cfg, const LinkFamily<Scalar>& fam,
                   const Eigen::MatrixBase<Derived>& phi, Scalar y) {
  if (phi.size() != state.dim())
    throw std::invalid_argument("step: feature dimension " + std::to_string(phi.size()) +
                                " does not match parameter dimension " + std::to_string(state.dim()));
  const Index iteration = state.n + 1;
  Scalar g;
  try {
    g = loss_grad_scalar(fam, static_cast<Scalar>(phi.dot(state.theta)), y);
  } catch (const NumericError& e) {
    throw DivergenceError(iteration, e.what());
  }
  if (cfg.lambda != Scalar(0)) state.theta *= Scalar(1) - cfg.gamma * cfg.lambda;
  state.theta.noalias() -= (cfg.gamma * g) * phi;

  if (!state.theta.allFinite()) throw DivergenceError(iteration, "non-finite parameter");
  if (state.theta.squaredNorm() > cfg.max_norm * cfg.max_norm)
    throw DivergenceError(iteration, "parameter norm exceeds " + std::to_string(static_cast<double>(cfg.max_norm)));

  state.n = iteration;
  if (iteration >= cfg.burn_in) state.moments.push(state.theta);
  if (state.history && iteration % cfg.history_stride == 0) state.history->push(state.theta);
}

template <typename Scalar>
void step(TrainerState<Scalar>& state, const SgdConfig<Scalar>& cfg, const LinkFamily<Scalar>& fam,
          const FeatureMap<Scalar>& fm, const Sample<Scalar>& s) {
  step_features(state, cfg, fam, fm.map(s.x), s.y);
}

/// Called at each checkpoint with the iteration count and a read-only state.
template <typename Scalar>
using EvalHook = std::function<void(Index iteration, const TrainerState<Scalar>& state, MetricLog& log)>;

template <typename Scalar>
struct TrainResult {
  TrainerState<Scalar> state;
  MetricLog log;
};

/// Single pass over `source`, which yields samples through
/// `bool next(Sample<Scalar>&)`. `checkpoints` must be strictly increasing
/// and within [1, stream length].
template <typename Scalar, typename Source>
TrainResult<Scalar> train_stream(const SgdConfig<Scalar>& cfg, const LinkFamily<Scalar>& fam,
                                 const FeatureMap<Scalar>& fm, Source& source, std::span<const Index> checkpoints,
                                 const EvalHook<Scalar>& hook) {
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1) throw std::invalid_argument("checkpoints must be >= 1");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
      throw std::invalid_argument("checkpoints must be strictly increasing");
  }
  if (cfg.theta0.size() != fm.output_dim()) throw ConfigError("theta0 dimension does not match feature map");

  TrainResult<Scalar> out{TrainerState<Scalar>::initial(cfg), MetricLog{}};
  auto next_cp = checkpoints.begin();
  Sample<Scalar> s;
  Vector<Scalar> phi(fm.output_dim());
  while (source.next(s)) {
    fm.map_into(s.x, phi);
    step_features(out.state, cfg, fam, phi, s.y);
    if (next_cp != checkpoints.end() && *next_cp == out.state.n) {
      if (hook) hook(out.state.n, out.state, out.log);
      ++next_cp;
    }
  }
  if (next_cp != checkpoints.end())
    throw std::invalid_argument("checkpoint " + std::to_string(*next_cp) + " beyond stream length " +
                                std::to_string(out.state.n));
  return out;
}

/// Sequential view of samples stored as matrix columns, visited in `order`
/// (all columns in index order when `order` is empty).
template <typename Scalar>
class ColumnStream {
 public:
  ColumnStream(const Matrix<Scalar>& x, const Vector<Scalar>& y, std::vector<Index> order = {})
      : x_(x), y_(y), order_(std::move(order)) {
    if (x.cols() != y.size()) throw std::invalid_argument("ColumnStream: x/y size mismatch");
  }

  bool next(Sample<Scalar>& s) {
    const Index total = order_.empty() ? x_.cols() : static_cast<Index>(order_.size());
    if (pos_ >= total) return false;
    const Index j = order_.empty() ? pos_ : order_[static_cast<std::size_t>(pos_)];
    s.x = x_.col(j);
    s.y = y_(j);
    ++pos_;
    return true;
  }

  Index size() const { return order_.empty() ? x_.cols() : static_cast<Index>(order_.size()); }

 private:
  const Matrix<Scalar>& x_;
  const Vector<Scalar>& y_;
  std::vector<Index> order_;
  Index pos_ = 0;
};

/// Unconditional exponential-family step theta - gamma (grad_a(theta) - t_x).
template <typename Scalar, typename GradA>
Vector<Scalar> uncond_step(const Vector<Scalar>& theta, Scalar gamma, const GradA& grad_a,
                           const Vector<Scalar>& t_x) {
  if (theta.size() != t_x.size()) throw std::invalid_argument("uncond_step: dimension mismatch");
  Vector<Scalar> next = theta - gamma * (grad_a(theta) - t_x);
  if (!next.allFinite()) throw DivergenceError(-1, "non-finite unconditional iterate");
  return next;
}

/// `count` log-spaced integer iterations from `first` to `last` inclusive,
/// deduplicated after rounding.
inline std::vector<Index> log_checkpoints(Index first, Index last, Index count) {
  std::vector<Index> out;
  if (last < 1 || count < 1) return out;
  first = std::clamp<Index>(first, 1, last);
  if (count == 1 || first == last) return {last};
  const double lo = std::log(static_cast<double>(first));
  const double hi = std::log(static_cast<double>(last));
  for (Index i = 0; i < count; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    Index v = static_cast<Index>(std::llround(std::exp(t)));
    v = std::clamp<Index>(v, first, last);
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  out.back() = last;
  return out;
}

}  // namespace glmavg
