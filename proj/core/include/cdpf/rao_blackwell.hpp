#pragma once

#include "cdpf/conjugate.hpp"
#include "cdpf/gaussian_block.hpp"
#include "cdpf/particle_filter.hpp"

#include <functional>
#include <memory>

namespace cdpf {

using MatrixFn = std::function<Matrix(const Vector& z, double t)>;

/// Conditionally Gaussian model. With z = [x2; x3]:
///   dx1    = F(z, t) x1 dt + f1(z, t) dt + V(z, t) deta      (eta of diffusion Q_eta)
///   dx2/dt = f2(z, t)
///   dx3    = f3(z, t) dt + L(t) dbeta                        (beta of diffusion Q_beta)
///   y_k    = H(z_k) x1(t_k) + r_k,  r_k ~ N(0, R(z_k))
/// The z part is a SplitSdeModel (x2 deterministic, x3 stochastic).
struct CondGaussModel {
  Eigen::Index dim_linear = 0;
  MatrixFn linear_matrix;     // F, p x p
  DriftFn linear_offset;      // f1, length p
  MatrixFn linear_dispersion; // V, p x r
  TimeMatrix linear_diffusion;  // Q_eta, r x r
  SplitSdeModel nonlinear;
  std::function<Matrix(const Vector& z)> measurement_matrix;  // H
  std::function<Matrix(const Vector& z)> measurement_cov;     // R
  GaussianBlock initial_block;

  void validate() const;
};

/// Euler step of dm/dt = F m + f1 and dP/dt = F P + P F^T + V Q_eta V^T;
/// P is symmetrized and kept PSD.
GaussianBlock propagate_gaussian_block(const GaussianBlock& block, const Matrix& linear_matrix,
                                       const Vector& linear_offset,
                                       const Matrix& linear_dispersion,
                                       const Matrix& linear_diffusion, double dt);

/// Draws z from the nonlinear initial sampler and gives every particle the
/// initial Gaussian block.
ParticleSet initialize_cond_gauss(const CondGaussModel& model, std::size_t n,
                                  std::uint64_t master_seed, double t0);

/// Conditionally Gaussian Rao-Blackwellized SIR step: z is sampled through the
/// coupled importance/scaled processes, the block follows the scaled path, the
/// Kalman update conditions it on y_k and the weight picks up Z N(y | mu, S).
/// `builder` constructs the importance process for the x3 block.
StepReport cdrb_sir_step(ParticleSet& set, const CondGaussModel& model,
                         const ImportanceBuilder& builder, const Measurement& y_k,
                         const FilterOptions& options);

/// x1-marginal of the mixture: sum_i w_i N(x1 | m_i, P_i).
double eval_mixture(const ParticleSet& set, const Vector& x1);

/// Maps (state at t_{k-1}, state at t_k) to what the conjugate family observes.
using FeatureFn = std::function<Vector(const Vector& x_prev, const Vector& x_k)>;
/// Model bookkeeping run after a particle has been propagated and its
/// statistic updated.
using PropagatedHook =
    std::function<void(const Vector& x_prev, Particle& particle, double t_k)>;

/// Static-parameter model: dynamics plus a conjugate family for the parameter.
struct ConjugateModel {
  std::shared_ptr<const ConjugateFamily> family;
  FeatureFn feature;
  PropagatedHook on_propagated;
};

/// Gives every particle the prior statistic T_0.
void attach_statistics(ParticleSet& set, const ConjugateFamily& family);

/// Static-parameter Rao-Blackwellized SIR step. The weight uses the marginal
/// likelihood under T_{k-1}; T_k = Phi(T_{k-1}, x_k, y_k) is stored afterwards.
StepReport cdrb_param_step(ParticleSet& set, const SdeModel& model,
                           const ImportanceBuilder& builder, const ConjugateModel& conj,
                           const Measurement& y_k, const FilterOptions& options);
StepReport cdrb_param_step(ParticleSet& set, const SplitSdeModel& model,
                           const ImportanceBuilder& builder, const ConjugateModel& conj,
                           const Measurement& y_k, const FilterOptions& options);

/// Weighted posterior mean of the static parameter, sum_i w_i E[theta | T_i].
double parameter_posterior_mean(const ParticleSet& set, const ConjugateFamily& family);

}  // namespace cdpf
