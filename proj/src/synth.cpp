#include "glmavg/synth.hpp"

#include <cmath>

namespace glmavg {

SynthModel parse_synth_model(std::string_view name) {
  if (name == "sinsum" || name == "model1") return SynthModel::SinSum;
  if (name == "cube" || name == "model2") return SynthModel::Cube;
  if (name == "kernel_ratio") return SynthModel::KernelRatio;
  if (name == "wellspecified") return SynthModel::WellSpecifiedLinear;
  if (name == "wellspecified_poisson") return SynthModel::WellSpecifiedPoisson;
  throw ConfigError("unknown synthetic model '" + std::string(name) + "'");
}

std::string_view to_string(SynthModel m) {
  switch (m) {
    case SynthModel::SinSum: return "sinsum";
    case SynthModel::Cube: return "cube";
    case SynthModel::KernelRatio: return "kernel_ratio";
    case SynthModel::WellSpecifiedLinear: return "wellspecified";
    case SynthModel::WellSpecifiedPoisson: return "wellspecified_poisson";
  }
  return "unknown";
}

namespace {

bool well_specified(SynthModel m) {
  return m == SynthModel::WellSpecifiedLinear || m == SynthModel::WellSpecifiedPoisson;
}

SynthSpec normalized(SynthSpec spec) {
  if (well_specified(spec.model)) {
    if (spec.theta_true.size() == 0) throw ConfigError("well-specified model needs theta_true");
    if (!spec.theta_true.allFinite()) throw ConfigError("theta_true must be finite");
    spec.dim = spec.theta_true.size();
    if (spec.model == SynthModel::WellSpecifiedPoisson) spec.family = FamilyKind::Poisson;
    if (spec.model == SynthModel::WellSpecifiedLinear && spec.family == FamilyKind::Poisson)
      throw ConfigError("use wellspecified_poisson for the poisson family");
  } else {
    spec.family = FamilyKind::Logistic;
  }
  if ((spec.model == SynthModel::SinSum || spec.model == SynthModel::Cube) && spec.dim < 2)
    throw ConfigError("sinsum/cube models need dim >= 2");
  if (spec.dim < 1) throw ConfigError("synthetic dimension must be >= 1");
  return spec;
}

double eta_for(const SynthSpec& spec, const VectorXd& x) {
  switch (spec.model) {
    case SynthModel::SinSum: return std::sin(x(0)) + std::sin(x(1));
    case SynthModel::Cube: return x(0) * x(0) * x(0) + x(1) * x(1) * x(1);
    case SynthModel::KernelRatio: return 5.0 / (5.0 + x.squaredNorm());
    case SynthModel::WellSpecifiedLinear:
    case SynthModel::WellSpecifiedPoisson: return spec.theta_true.dot(x);
  }
  return 0.0;
}

}  // namespace

MatrixXd standard_normal_inputs(Index dim, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(dim, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < dim; ++i) x(i, j) = normal(rng);
  return x;
}

SampleStream::SampleStream(SynthSpec spec, Index n) : spec_(normalized(std::move(spec))), n_(n), rng_(spec_.seed) {
  if (n < 1) throw std::invalid_argument("sample stream needs n >= 1");
}

LinkFamily<double> SampleStream::family() const { return LinkFamily<double>(spec_.family); }

double SampleStream::eta_star_star(const VectorXd& x) const { return eta_for(spec_, x); }

bool SampleStream::next(Sample<double>& s) {
  if (produced_ >= n_) return false;
  s.x.resize(spec_.dim);
  for (Index i = 0; i < spec_.dim; ++i) s.x(i) = normal_(rng_);
  const double eta = eta_for(spec_, s.x);
  switch (spec_.family) {
    case FamilyKind::Logistic: s.y = uniform_(rng_) < LinkFamily<double>::sigmoid(eta) ? 1.0 : 0.0; break;
    case FamilyKind::Poisson: {
      if (eta > kPoissonSynthEtaMax)
        throw NumericError("Poisson rate overflow: natural parameter " + std::to_string(eta) + " > " +
                           std::to_string(kPoissonSynthEtaMax));
      std::poisson_distribution<long long> pois(std::exp(eta));
      s.y = static_cast<double>(pois(rng_));
      break;
    }
    case FamilyKind::Gaussian: s.y = eta + normal_(rng_); break;
  }
  ++produced_;
  return true;
}

OracleProblem oracle_problem(const SynthSpec& raw) {
  const SynthSpec spec = normalized(raw);
  OracleProblem p;
  p.fam = LinkFamily<double>(spec.family);
  p.input_dim = spec.dim;
  p.eta_star_star = [spec](const VectorXd& x) { return eta_for(spec, x); };
  const Index dim = spec.dim;
  p.input_sampler = [dim](Index n, std::uint64_t seed) { return standard_normal_inputs(dim, n, seed); };
  return p;
}

SynthDraw draw(const SynthSpec& spec, Index n) { return SynthDraw{SampleStream(spec, n), oracle_problem(spec)}; }

SynthDraw draw_wellspecified(const LinkFamily<double>& fam, const VectorXd& theta_true, Index n, std::uint64_t seed) {
  SynthSpec spec;
  spec.model =
      fam.kind() == FamilyKind::Poisson ? SynthModel::WellSpecifiedPoisson : SynthModel::WellSpecifiedLinear;
  spec.family = fam.kind();
  spec.theta_true = theta_true;
  spec.seed = seed;
  return draw(spec, n);
}

}  // namespace glmavg
