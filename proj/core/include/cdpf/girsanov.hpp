#pragma once

#include "cdpf/linalg.hpp"
#include "cdpf/sde_core.hpp"

#include <functional>
#include <vector>

namespace cdpf {

/// Importance (proposal) process ds = g(s, t) dt + B(t) dbeta. For split
/// models `drift` is g2 and returns only the stochastic block.
struct ImportanceSpec {
  DriftFn drift;
  TimeMatrix dispersion;
};

/// Log-likelihood ratio, reset to zero at the start of every interval.
struct LlrAccumulator {
  double value = 0.0;
};

/// Proposal path s, scaled path s* and the log-likelihood ratio, all advanced
/// on one grid with one set of Brownian increments. For split models the
/// vectors hold the full [x1; x2] state.
struct CoupledPathState {
  Vector s;
  Vector s_star;
  LlrAccumulator llr;

  /// exp(llr). Only meant for reporting; filters stay in the log domain.
  double likelihood_ratio() const;
};

/// Matrices needed by one likelihood-ratio step, evaluated at a grid point.
struct CouplingFactors {
  Matrix scale;         // L B^{-1}
  Matrix noise_weight;  // L^{-T} Q^{-1}
  Matrix drift_metric;  // (L Q L^T)^{-1}
};

/// Factorizes L, B and Q at time t with a condition-number guard. When B and
/// L are bitwise equal the scale is the exact identity.
CouplingFactors coupling_factors(const Matrix& dispersion, const Matrix& importance_dispersion,
                                 const Matrix& diffusion, double t,
                                 double condition_limit = kDefaultConditionLimit);

/// Evaluates coupling factors along a grid, factorizing only once if L, B and Q
/// are all time-constant.
class CouplingCache {
 public:
  CouplingCache(const TimeMatrix& dispersion, const TimeMatrix& importance_dispersion,
                const DiffusionSpec& diffusion, double condition_limit = kDefaultConditionLimit);

  const CouplingFactors& at(double t);

 private:
  const TimeMatrix& dispersion_;
  const TimeMatrix& importance_dispersion_;
  const DiffusionSpec& diffusion_;
  double condition_limit_;
  bool constant_;
  bool ready_ = false;
  CouplingFactors factors_;
};

/// s* + L B^{-1} ds.
Vector step_scaled_process(const Vector& s_star, const Matrix& dispersion,
                           const Matrix& importance_dispersion, double t, const Vector& ds);
Vector step_scaled_process(const Vector& s_star, const CouplingFactors& factors, const Vector& ds);

/// One Euler step of the log-likelihood ratio:
///   d = f(s*) - L B^{-1} g(s)
///   llr + d^T L^{-T} Q^{-1} dbeta - 1/2 d^T (L Q L^T)^{-1} d dt
/// with every matrix at the left endpoint t.
double step_llr(double llr, const Vector& f_at_sstar, const Vector& g_at_s,
                const CouplingFactors& factors, double dt, const Vector& dbeta);
double step_llr(double llr, const Vector& f_at_sstar, const Vector& g_at_s,
                const Matrix& dispersion, const Matrix& importance_dispersion,
                const Matrix& diffusion, double t, double dt, const Vector& dbeta);

/// Same arithmetic as step_llr, with the stochastic-block drifts f2 and g2
/// already evaluated at the joint states (s1*, s2*) and (s1, s2).
double step_llr_singular(double llr, const Vector& f2_at_sstar, const Vector& g2_at_s,
                         const CouplingFactors& factors, double dt, const Vector& dbeta);
double step_llr_singular(double llr, const Vector& f2_at_sstar, const Vector& g2_at_s,
                         const Matrix& dispersion, const Matrix& importance_dispersion,
                         const Matrix& diffusion, double t, double dt, const Vector& dbeta);

/// Called at every grid point j < n_steps with the coupled state at the left
/// endpoint t_j, before the step is taken.
using CoupledStepHook = std::function<void(int j, double t, const CoupledPathState& state)>;

/// Simulates s, s* and the log-likelihood ratio from x_prev over the grid.
/// The returned s_star is the new particle state.
CoupledPathState propagate_coupled(const SdeModel& model, const ImportanceSpec& imp,
                                   const Vector& x_prev, const TimeGrid& grid,
                                   const BrownianIncrements& incs,
                                   const CoupledStepHook& hook = {});

/// Singular-class version: the deterministic blocks s1 and s1* follow the model
/// ODE evaluated on their own joint states, s2 follows the proposal and s2* the
/// scaled increments.
CoupledPathState propagate_coupled(const SplitSdeModel& model, const ImportanceSpec& imp,
                                   const Vector& x_prev, const TimeGrid& grid,
                                   const BrownianIncrements& incs,
                                   const CoupledStepHook& hook = {});

/// Monte Carlo estimate of KL[q|p] = E_q[1/2 int (f - f_L)^T Sigma^{-1} (f - f_L) dt]
/// from paths simulated under q (each path holds one state per grid point).
double estimate_kl(const DriftFn& f, const DriftFn& f_l, const Matrix& sigma,
                   const std::vector<std::vector<Vector>>& paths_from_q, const TimeGrid& grid);

}  // namespace cdpf
