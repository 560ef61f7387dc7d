#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "glmavg/eval.hpp"
#include "glmavg/family.hpp"
#include "glmavg/types.hpp"

namespace glmavg {

/// Generating models. Inputs are standard normal in every case.
///   SinSum        eta**(x) = sin x1 + sin x2                 (logistic)
///   Cube          eta**(x) = x1^3 + x2^3                     (logistic)
///   KernelRatio   eta**(x) = 5 / (5 + x.x)                   (logistic)
///   WellSpecifiedLinear   eta**(x) = theta_true.x  (logistic or gaussian)
///   WellSpecifiedPoisson  eta**(x) = theta_true.x  (poisson)
enum class SynthModel { SinSum, Cube, KernelRatio, WellSpecifiedLinear, WellSpecifiedPoisson };

SynthModel parse_synth_model(std::string_view name);
std::string_view to_string(SynthModel m);

struct SynthSpec {
  SynthModel model = SynthModel::SinSum;
  Index dim = 2;
  /// Required by the well-specified models; its size overrides `dim`.
  VectorXd theta_true;
  /// Family for WellSpecifiedLinear (Logistic or Gaussian).
  FamilyKind family = FamilyKind::Logistic;
  std::uint64_t seed = 0;

  /// Default input dimension per model: 2, or 5 for KernelRatio.
  static Index default_dim(SynthModel m) { return m == SynthModel::KernelRatio ? 5 : 2; }
};

/// Poisson rate guard for well-specified Poisson draws.
inline constexpr double kPoissonSynthEtaMax = 20.0;

/// Lazily generated i.i.d. sample stream; O(1) memory in n.
class SampleStream {
 public:
  SampleStream(SynthSpec spec, Index n);

  bool next(Sample<double>& s);
  Index size() const { return n_; }
  Index produced() const { return produced_; }

  const SynthSpec& spec() const { return spec_; }
  LinkFamily<double> family() const;
  double eta_star_star(const VectorXd& x) const;

 private:
  SynthSpec spec_;
  Index n_;
  Index produced_ = 0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct SynthDraw {
  SampleStream stream;
  OracleProblem problem;
};

/// Validates `spec` and returns its stream of n samples with the paired oracle problem.
SynthDraw draw(const SynthSpec& spec, Index n);

/// Well-specified GLM: eta**(x) = theta_true.x, labels from `fam` at that
/// natural parameter (unit-variance noise for the gaussian family).
SynthDraw draw_wellspecified(const LinkFamily<double>& fam, const VectorXd& theta_true, Index n, std::uint64_t seed);

OracleProblem oracle_problem(const SynthSpec& spec);

/// Standard-normal inputs (dim x n) deterministic in seed.
MatrixXd standard_normal_inputs(Index dim, Index n, std::uint64_t seed);

}  // namespace glmavg
