#include "cdpf/rao_blackwell.hpp"

#include "cdpf/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace cdpf {

KalmanUpdate kalman_update(const GaussianBlock& prior, const Matrix& h, const Matrix& r,
                           const Vector& y) {
  if (h.cols() != prior.dim() || h.rows() != y.size() || r.rows() != y.size() ||
      r.cols() != y.size()) {
    throw InvalidArgument("kalman_update: H, R and y dimensions do not match the block");
  }
  KalmanUpdate out;
  out.innovation_mean = h * prior.mean;
  out.innovation_cov = symmetrized(h * prior.cov * h.transpose() + r);
  Eigen::LDLT<Matrix> ldlt(out.innovation_cov);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all() ||
      condition_number(out.innovation_cov) > kDefaultConditionLimit) {
    throw MatrixInversionError("kalman_update: innovation covariance S is singular", 0.0);
  }
  // K = P H^T S^{-1}, computed as (S^{-1} H P)^T with S symmetric.
  const Matrix gain = ldlt.solve(h * prior.cov).transpose();
  out.block.mean = prior.mean + gain * (y - out.innovation_mean);
  out.block.cov = project_psd(prior.cov - gain * out.innovation_cov * gain.transpose());
  if (!out.block.mean.allFinite() || !out.block.cov.allFinite()) {
    throw IntegrationError("kalman_update: non-finite posterior");
  }
  return out;
}

double gaussian_log_density(const Vector& y, const Vector& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw MatrixInversionError("gaussian_log_density: covariance is not positive definite", 0.0);
  }
  const Vector r = y - mean;
  const Matrix l = llt.matrixL();
  const Vector white = l.triangularView<Eigen::Lower>().solve(r);
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi) + log_det +
                 white.squaredNorm());
}

void CondGaussModel::validate() const {
  nonlinear.validate();
  if (dim_linear < 1) throw InvalidArgument("CondGaussModel: empty linear block");
  if (!linear_matrix || !linear_offset || !linear_dispersion || !measurement_matrix ||
      !measurement_cov) {
    throw InvalidArgument("CondGaussModel: missing model function");
  }
  if (initial_block.dim() != dim_linear || initial_block.cov.rows() != dim_linear ||
      initial_block.cov.cols() != dim_linear) {
    throw InvalidArgument("CondGaussModel: initial block has the wrong dimension");
  }
}

GaussianBlock propagate_gaussian_block(const GaussianBlock& block, const Matrix& linear_matrix,
                                       const Vector& linear_offset,
                                       const Matrix& linear_dispersion,
                                       const Matrix& linear_diffusion, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("propagate_gaussian_block: dt must be positive");
  GaussianBlock out;
  out.mean = block.mean + (linear_matrix * block.mean + linear_offset) * dt;
  const Matrix fp = linear_matrix * block.cov;
  out.cov = block.cov + (fp + fp.transpose() +
                         linear_dispersion * linear_diffusion * linear_dispersion.transpose()) *
                            dt;
  out.cov = project_psd(out.cov);
  if (!out.mean.allFinite() || !out.cov.allFinite()) {
    throw IntegrationError("propagate_gaussian_block: non-finite mean or covariance");
  }
  return out;
}

ParticleSet initialize_cond_gauss(const CondGaussModel& model, std::size_t n,
                                  std::uint64_t master_seed, double t0) {
  model.validate();
  ParticleSet set = ParticleSet::initialize(n, model.nonlinear.initial_sampler, master_seed, t0);
  for (auto& p : set.particles()) p.block = model.initial_block;
  return set;
}

StepReport cdrb_sir_step(ParticleSet& set, const CondGaussModel& model,
                         const ImportanceBuilder& builder, const Measurement& y_k,
                         const FilterOptions& options) {
  const TimeGrid grid = TimeGrid::make(set.time(), y_k.time, options.n_steps);
  const double dt = grid.dt();
  auto update = [&](Particle& p, Rng& rng, double& llr) {
    if (p.block.empty()) throw InvalidArgument("cdrb_sir_step: particle has no Gaussian block");
    const ImportanceSpec imp = builder(p, y_k, grid);
    const BrownianIncrements incs =
        sample_brownian_increments(grid, model.nonlinear.diffusion, rng);
    GaussianBlock block = p.block;
    auto advance_block = [&](int, double t, const CoupledPathState& st) {
      const Vector& z = st.s_star;
      block = propagate_gaussian_block(block, model.linear_matrix(z, t), model.linear_offset(z, t),
                                       model.linear_dispersion(z, t), model.linear_diffusion.at(t),
                                       dt);
    };
    CoupledPathState st =
        propagate_coupled(model.nonlinear, imp, p.state, grid, incs, advance_block);
    p.state = std::move(st.s_star);
    const KalmanUpdate ku = kalman_update(block, model.measurement_matrix(p.state),
                                          model.measurement_cov(p.state), y_k.value);
    p.block = ku.block;
    llr = st.llr.value;
    return llr + gaussian_log_density(y_k.value, ku.innovation_mean, ku.innovation_cov);
  };
  return sir_step(set, y_k.time, update, options);
}

double eval_mixture(const ParticleSet& set, const Vector& x1) {
  const std::vector<double> w = set.weights();
  double density = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& b = set[i].block;
    if (b.empty()) throw InvalidArgument("eval_mixture: particle has no Gaussian block");
    if (w[i] == 0.0) continue;
    if (!x1.allFinite()) continue;
    density += w[i] * std::exp(gaussian_log_density(x1, b.mean, b.cov));
  }
  return density;
}

void attach_statistics(ParticleSet& set, const ConjugateFamily& family) {
  const Vector t0 = family.prior();
  family.validate(t0);
  for (auto& p : set.particles()) p.stats = t0;
}

namespace {

template <typename Model>
StepReport param_step(ParticleSet& set, const Model& model, const ImportanceBuilder& builder,
                      const ConjugateModel& conj, const Measurement& y_k,
                      const FilterOptions& options) {
  if (!conj.family || !conj.feature) {
    throw InvalidArgument("cdrb_param_step: conjugate model needs a family and a feature map");
  }
  const TimeGrid grid = TimeGrid::make(set.time(), y_k.time, options.n_steps);
  const ConjugateFamily& family = *conj.family;
  auto update = [&](Particle& p, Rng& rng, double& llr) {
    const ImportanceSpec imp = builder(p, y_k, grid);
    const BrownianIncrements incs = sample_brownian_increments(grid, model.diffusion, rng);
    CoupledPathState st = propagate_coupled(model, imp, p.state, grid, incs);
    const Vector x_prev = std::move(p.state);
    p.state = std::move(st.s_star);
    const Vector feature = conj.feature(x_prev, p.state);
    const double log_marginal = family.marginal_log_likelihood(y_k.value, feature, p.stats);
    p.stats = family.update(p.stats, feature, y_k.value);
    family.validate(p.stats);
    if (conj.on_propagated) conj.on_propagated(x_prev, p, y_k.time);
    llr = st.llr.value;
    return llr + log_marginal;
  };
  return sir_step(set, y_k.time, update, options);
}

}  // namespace

StepReport cdrb_param_step(ParticleSet& set, const SdeModel& model,
                           const ImportanceBuilder& builder, const ConjugateModel& conj,
                           const Measurement& y_k, const FilterOptions& options) {
  return param_step(set, model, builder, conj, y_k, options);
}

StepReport cdrb_param_step(ParticleSet& set, const SplitSdeModel& model,
                           const ImportanceBuilder& builder, const ConjugateModel& conj,
                           const Measurement& y_k, const FilterOptions& options) {
  return param_step(set, model, builder, conj, y_k, options);
}

double parameter_posterior_mean(const ParticleSet& set, const ConjugateFamily& family) {
  const std::vector<double> w = set.weights();
  double mean = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (w[i] > 0.0) mean += w[i] * family.posterior_mean(set[i].stats);
  }
  return mean;
}

}  // namespace cdpf
