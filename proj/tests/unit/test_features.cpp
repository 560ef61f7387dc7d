#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <thread>
#include <vector>

#include "glmavg/features.hpp"
#include "test_util.hpp"

using namespace glmavg;

TEST_CASE("kernel examples") {
  const Kernel<double> lap{KernelKind::Laplacian, 1.0};
  const VectorXd s = VectorXd::Constant(3, 0.4);
  CHECK(lap(s, s) == 1.0);

  const Kernel<double> lap2{KernelKind::Laplacian, 2.0};
  CHECK(kernel_eval(lap2, VectorXd::Zero(2), VectorXd::Ones(2)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(kernel_eval(lap2, VectorXd::Zero(2), VectorXd::Ones(2)) == doctest::Approx(0.367879).epsilon(1e-6));

  const Kernel<double> gau{KernelKind::Gaussian, 1.0};
  VectorXd t(1);
  t << 2.0;
  CHECK(gau(VectorXd::Zero(1), t) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(gau(VectorXd::Zero(1), t) == doctest::Approx(0.135335).epsilon(1e-6));
}

TEST_CASE("kernel dimension mismatch") {
  const Kernel<double> k{KernelKind::Gaussian, 1.0};
  CHECK_THROWS_AS(k(VectorXd::Zero(2), VectorXd::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_kind("rbf"), ConfigError);
}

TEST_CASE("property: kernel symmetric, unit diagonal, values in (0,1]") {
  const MatrixXd pts = testing::gaussian_matrix(4, 40, 5);
  for (auto kind : {KernelKind::Laplacian, KernelKind::Gaussian}) {
    const Kernel<double> k{kind, 1.5};
    for (Index i = 0; i < pts.cols(); ++i) {
      CHECK(k(pts.col(i), pts.col(i)) == 1.0);
      for (Index j = 0; j < pts.cols(); ++j) {
        const double v = k(pts.col(i), pts.col(j));
        CHECK(v == k(pts.col(j), pts.col(i)));
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("linear map is the identity") {
  const auto fm = FeatureMap<double>::linear(2);
  VectorXd x(2);
  x << 1.0, 2.0;
  CHECK(fm.map(x) == x);
  CHECK(fm.output_dim() == 2);
  CHECK_THROWS_AS(fm.map(VectorXd::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(FeatureMap<double>::linear(0), std::invalid_argument);
}

TEST_CASE("nystrom with a single landmark") {
  const Kernel<double> k{KernelKind::Laplacian, 1.0};
  VectorXd z(2);
  z << 0.3, -0.2;
  const auto fm = FeatureMap<double>::nystrom(k, z);
  CHECK(fm.map(z)(0) == doctest::Approx(1.0).epsilon(1e-15));

  // k(z, x) = 0.5 for ||z - x||_1 = log 2
  VectorXd x = z;
  x(0) += std::log(2.0);
  CHECK(fm.map(x)(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("nystrom with far-apart landmarks is near the identity") {
  const Kernel<double> k{KernelKind::Laplacian, 1.0};
  MatrixXd lm(2, 2);
  lm << 0.0, 25.0, 0.0, 25.0;  // l1 distance 50
  const auto fm = FeatureMap<double>::nystrom(k, lm);
  CHECK((fm.map(lm.col(0)) - VectorXd::Unit(2, 0)).norm() < 1e-12);
  CHECK((fm.map(lm.col(1)) - VectorXd::Unit(2, 1)).norm() < 1e-12);
}

TEST_CASE("nystrom with a duplicated landmark has rank 1") {
  const Kernel<double> k{KernelKind::Gaussian, 1.0};
  MatrixXd lm(2, 2);
  lm << 0.5, 0.5, -1.0, -1.0;
  const auto fm = FeatureMap<double>::nystrom(k, lm);
  CHECK(fm.rank() == 1);
  const VectorXd phi = fm.map(lm.col(0));
  CHECK(phi.allFinite());
  CHECK(phi.squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
  VectorXd x(2);
  x << 0.0, 0.0;
  CHECK(fm.map(x).dot(fm.map(lm.col(0))) == doctest::Approx(k(x, lm.col(0))).epsilon(1e-12));
}

TEST_CASE("nystrom construction errors") {
  const Kernel<double> k{KernelKind::Laplacian, 1.0};
  CHECK_THROWS(FeatureMap<double>::nystrom(k, MatrixXd(2, 0)));
  CHECK_THROWS(FeatureMap<double>::nystrom(Kernel<double>{KernelKind::Laplacian, 0.0}, MatrixXd::Zero(2, 2)));
  MatrixXd bad = MatrixXd::Zero(2, 2);
  bad(0, 0) = NAN;
  CHECK_THROWS_AS(FeatureMap<double>::nystrom(k, bad), NumericError);
}

TEST_CASE("property: landmark reproduction and whitening identity") {
  const MatrixXd lm = testing::gaussian_matrix(3, 30, 21);
  for (auto kind : {KernelKind::Laplacian, KernelKind::Gaussian}) {
    const Kernel<double> k{kind, 2.0};
    const auto fm = FeatureMap<double>::nystrom(k, lm);
    REQUIRE(fm.rank() == 30);
    const MatrixXd phi = fm.map_columns(lm);
    const MatrixXd kii = gram(k, lm, lm);
    CHECK((phi.transpose() * phi - kii).cwiseAbs().maxCoeff() <= 1e-8);
    const MatrixXd p = fm.whitening() * kii * fm.whitening();
    CHECK((p - MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((fm.whitening() - fm.whitening().transpose()).norm() == 0.0);
  }
}

TEST_CASE("property: whitening projects onto the range when singular") {
  MatrixXd lm = testing::gaussian_matrix(2, 6, 4);
  lm.col(5) = lm.col(1);
  const Kernel<double> k{KernelKind::Gaussian, 1.0};
  const auto fm = FeatureMap<double>::nystrom(k, lm);
  CHECK(fm.rank() == 5);
  const MatrixXd kii = gram(k, lm, lm);
  const MatrixXd p = fm.whitening() * kii * fm.whitening();
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(p.trace() == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("property: feature Gram matrix is positive semidefinite") {
  const MatrixXd lm = testing::gaussian_matrix(2, 20, 9);
  const MatrixXd pts = testing::gaussian_matrix(2, 60, 10);
  const auto fm = FeatureMap<double>::nystrom(Kernel<double>{KernelKind::Laplacian, 1.0}, lm);
  const MatrixXd phi = fm.map_columns(pts);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(phi.transpose() * phi);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("property: map is deterministic and agrees with the batch path") {
  const MatrixXd lm = testing::gaussian_matrix(2, 15, 2);
  const MatrixXd pts = testing::gaussian_matrix(2, 25, 3);
  const auto fm = FeatureMap<double>::nystrom(Kernel<double>{KernelKind::Laplacian, 1.0}, lm);
  const MatrixXd batch = fm.map_columns(pts);
  for (Index j = 0; j < pts.cols(); ++j) {
    const VectorXd a = fm.map(pts.col(j));
    const VectorXd b = fm.map(pts.col(j));
    CHECK(a == b);
    CHECK((a - batch.col(j)).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("concurrent map calls agree with sequential ones") {
  const MatrixXd lm = testing::gaussian_matrix(2, 40, 12);
  const MatrixXd pts = testing::gaussian_matrix(2, 400, 13);
  const auto fm = FeatureMap<double>::nystrom(Kernel<double>{KernelKind::Laplacian, 1.0}, lm);
  MatrixXd seq(40, pts.cols()), par(40, pts.cols());
  for (Index j = 0; j < pts.cols(); ++j) seq.col(j) = fm.map(pts.col(j));
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 4; ++t)
      threads.emplace_back([&, t] {
        for (Index j = t; j < pts.cols(); j += 4) par.col(j) = fm.map(pts.col(j));
      });
  }
  CHECK(seq == par);
}
