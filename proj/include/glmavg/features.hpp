#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Eigenvalues>

#include "glmavg/errors.hpp"
#include "glmavg/types.hpp"

namespace glmavg {

enum class KernelKind { Laplacian, Gaussian };

inline KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "laplacian") return KernelKind::Laplacian;
  if (name == "gaussian") return KernelKind::Gaussian;
  throw ConfigError("unknown kernel '" + std::string(name) + "'");
}

/// Translation-invariant unit-diagonal kernel.
///   Laplacian: exp(-|s - t|_1 / sigma)
///   Gaussian:  exp(-|s - t|_2^2 / (2 sigma^2))
template <typename Scalar>
struct Kernel {
  KernelKind kind = KernelKind::Laplacian;
  Scalar sigma = Scalar(1);

  template <typename DerivedS, typename DerivedT>
  Scalar operator()(const Eigen::MatrixBase<DerivedS>& s, const Eigen::MatrixBase<DerivedT>& t) const {
    if (s.size() != t.size()) throw std::invalid_argument("kernel: dimension mismatch");
    switch (kind) {
      case KernelKind::Laplacian: return std::exp(-(s - t).template lpNorm<1>() / sigma);
      case KernelKind::Gaussian: return std::exp(-(s - t).squaredNorm() / (Scalar(2) * sigma * sigma));
    }
    return Scalar(0);
  }
};

template <typename Scalar, typename DerivedS, typename DerivedT>
Scalar kernel_eval(const Kernel<Scalar>& k, const Eigen::MatrixBase<DerivedS>& s,
                   const Eigen::MatrixBase<DerivedT>& t) {
  return k(s, t);
}

/// Gram matrix K(A, B) for points stored as columns.
template <typename Scalar>
Matrix<Scalar> gram(const Kernel<Scalar>& k, const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  Matrix<Scalar> out(a.cols(), b.cols());
  for (Index j = 0; j < b.cols(); ++j)
    for (Index i = 0; i < a.cols(); ++i) out(i, j) = k(a.col(i), b.col(j));
  return out;
}

enum class FeatureKind { Linear, Nystrom };

/// x -> Phi(x). Either the identity, or the column-sampling map
/// Phi(x) = K(I,I)^{-1/2} K(I,x) built from m landmark points.
/// Immutable after construction.
template <typename Scalar>
class FeatureMap {
 public:
  /// Relative eigenvalue cutoff for the inverse square root of K(I,I).
  static constexpr Scalar kEigenCutoff = Scalar(1e-10);

  static FeatureMap linear(Index input_dim) {
    if (input_dim < 1) throw std::invalid_argument("linear feature map needs input_dim >= 1");
    FeatureMap fm;
    fm.kind_ = FeatureKind::Linear;
    fm.input_dim_ = input_dim;
    fm.output_dim_ = input_dim;
    return fm;
  }

  /// Landmarks are the columns of `landmarks` (input_dim x m).
  static FeatureMap nystrom(const Kernel<Scalar>& kernel, const Matrix<Scalar>& landmarks) {
    if (landmarks.cols() < 1) throw std::invalid_argument("nystrom: need at least one landmark");
    if (!(kernel.sigma > Scalar(0))) throw std::invalid_argument("nystrom: kernel bandwidth must be positive");
    if (!landmarks.allFinite()) throw NumericError("nystrom: non-finite landmark");

    const Matrix<Scalar> kii = gram(kernel, landmarks, landmarks);
    if (!kii.allFinite()) throw NumericError("nystrom: non-finite kernel matrix");

    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(kii);
    if (eig.info() != Eigen::Success) throw NumericError("nystrom: eigendecomposition failed");
    const Vector<Scalar>& evals = eig.eigenvalues();
    const Scalar largest = evals.maxCoeff();
    if (!(largest > Scalar(0))) throw NumericError("nystrom: degenerate landmark set (no positive eigenvalue)");
    const Scalar cutoff = kEigenCutoff * largest;

    Vector<Scalar> inv_sqrt(evals.size());
    Index rank = 0;
    for (Index i = 0; i < evals.size(); ++i) {
      if (evals(i) > cutoff) {
        inv_sqrt(i) = Scalar(1) / std::sqrt(evals(i));
        ++rank;
      } else {
        inv_sqrt(i) = Scalar(0);
      }
    }

    FeatureMap fm;
    fm.kind_ = FeatureKind::Nystrom;
    fm.input_dim_ = landmarks.rows();
    fm.output_dim_ = landmarks.cols();
    fm.kernel_ = kernel;
    fm.landmarks_ = landmarks;
    fm.rank_ = rank;
    fm.whitening_ = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    // symmetrize away the rounding of the triple product
    fm.whitening_ = (Scalar(0.5) * (fm.whitening_ + fm.whitening_.transpose())).eval();
    return fm;
  }

  FeatureKind kind() const { return kind_; }
  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return output_dim_; }
  /// Number of eigendirections of K(I,I) retained by the cutoff.
  Index rank() const { return rank_; }
  const Kernel<Scalar>& kernel() const { return kernel_; }
  const Matrix<Scalar>& landmarks() const { return landmarks_; }
  const Matrix<Scalar>& whitening() const { return whitening_; }

  template <typename Derived>
  void map_into(const Eigen::MatrixBase<Derived>& x, Vector<Scalar>& out) const {
    if (x.size() != input_dim_)
      throw std::invalid_argument("feature map: expected input dimension " + std::to_string(input_dim_) +
                                  ", got " + std::to_string(x.size()));
    if (kind_ == FeatureKind::Linear) {
      out = x;
      return;
    }
    Vector<Scalar> kx(landmarks_.cols());
    for (Index i = 0; i < landmarks_.cols(); ++i) kx(i) = kernel_(landmarks_.col(i), x);
    out.noalias() = whitening_ * kx;
  }

  template <typename Derived>
  Vector<Scalar> map(const Eigen::MatrixBase<Derived>& x) const {
    Vector<Scalar> out(output_dim_);
    map_into(x, out);
    return out;
  }

  /// Maps every column of `points`; result is output_dim x points.cols().
  Matrix<Scalar> map_columns(const Matrix<Scalar>& points) const {
    if (points.rows() != input_dim_) throw std::invalid_argument("feature map: input dimension mismatch");
    if (kind_ == FeatureKind::Linear) return points;
    return whitening_ * gram(kernel_, landmarks_, points);
  }

 private:
  FeatureMap() = default;

  FeatureKind kind_ = FeatureKind::Linear;
  Index input_dim_ = 0;
  Index output_dim_ = 0;
  Index rank_ = 0;
  Kernel<Scalar> kernel_{};
  Matrix<Scalar> landmarks_;
  Matrix<Scalar> whitening_;
};

}  // namespace glmavg
