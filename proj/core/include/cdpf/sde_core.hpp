#pragma once

#include "cdpf/linalg.hpp"
#include "cdpf/random.hpp"

#include <functional>
#include <vector>

namespace cdpf {

/// Uniform grid over one inter-measurement interval [t0, t1].
struct TimeGrid {
  double t0 = 0.0;
  double t1 = 1.0;
  int n_steps = 1;

  /// Validated constructor: t1 > t0 and n_steps >= 1.
  static TimeGrid make(double t0, double t1, int n_steps);

  double dt() const noexcept { return (t1 - t0) / n_steps; }
  /// Grid point j in [0, n_steps]; time(n_steps) is exactly t1.
  double time(int j) const noexcept { return j == n_steps ? t1 : t0 + j * dt(); }
};

/// Diffusion matrix Q(t) of the driving Brownian motion.
class DiffusionSpec {
 public:
  DiffusionSpec() = default;

  /// Time-constant Q; checked for symmetry and positive definiteness here.
  static DiffusionSpec constant(Matrix q);
  /// Time-varying Q; checked at every grid point where it is used.
  static DiffusionSpec varying(std::function<Matrix(double)> q, Eigen::Index dim);

  Matrix at(double t) const { return q_.at(t); }
  bool is_time_constant() const noexcept { return q_.is_constant(); }
  Eigen::Index dim() const noexcept { return q_.rows(); }

  /// Lower Cholesky factor of Q(t) * dt. Throws DiffusionSpecError naming t
  /// if Q(t) is not symmetric positive definite.
  Matrix increment_factor(double t, double dt) const;

 private:
  TimeMatrix q_;
  Matrix chol_;  // cached factor of Q when time-constant
};

using DriftFn = std::function<Vector(const Vector&, double)>;
using StateSampler = std::function<Vector(Rng&)>;
using Projection = std::function<void(Vector&)>;

/// dx = f(x, t) dt + L(t) dbeta with beta of diffusion Q(t).
struct SdeModel {
  Eigen::Index dim_state = 0;
  Eigen::Index dim_noise = 0;
  DriftFn drift;
  TimeMatrix dispersion;
  DiffusionSpec diffusion;
  StateSampler initial_sampler;
  /// Optional in-place state constraint applied after every Euler step.
  Projection project;

  /// Checks dimensions and, for the non-singular class, n == s and L(t0) invertible.
  void validate(double t0 = 0.0) const;
};

/// Singular-class model with the state split as [x1; x2]:
///   dx1/dt = f1(x, t)                      (deterministic, dim_det)
///   dx2    = f2(x, t) dt + L(t) dbeta      (stochastic, dim_stoch == dim_noise)
struct SplitSdeModel {
  Eigen::Index dim_det = 0;
  Eigen::Index dim_stoch = 0;
  Eigen::Index dim_noise = 0;
  DriftFn det_field;
  DriftFn stoch_drift;
  TimeMatrix dispersion;
  DiffusionSpec diffusion;
  StateSampler initial_sampler;
  Projection project;

  Eigen::Index dim_state() const noexcept { return dim_det + dim_stoch; }
  void validate(double t0 = 0.0) const;
};

/// Deterministic vector field dy/dt = field(y, t).
struct OdeField {
  DriftFn field;
};

/// One Brownian increment per grid interval.
using BrownianIncrements = std::vector<Vector>;

/// Draws dbeta_j = chol(Q(t_j) dt) xi_j for every interval of the grid.
BrownianIncrements sample_brownian_increments(const TimeGrid& grid, const DiffusionSpec& diff,
                                              Rng& rng);

/// x + f(x, t) dt + L dbeta, where L is the dispersion evaluated at t.
Vector euler_maruyama_step(const Vector& x, const DriftFn& drift, const Matrix& dispersion,
                           double t, double dt, const Vector& dbeta);

/// Euler-Maruyama path; path[0] == x0, one state per grid point.
std::vector<Vector> integrate_sde(const SdeModel& model, const Vector& x0, const TimeGrid& grid,
                                  const BrownianIncrements& incs);

/// Euler-Maruyama path of a split model: x1 by forward Euler, x2 by Euler-Maruyama,
/// both evaluated at the left endpoint.
std::vector<Vector> integrate_split_sde(const SplitSdeModel& model, const Vector& x0,
                                        const TimeGrid& grid, const BrownianIncrements& incs);

/// Forward-Euler path of a deterministic system on the grid.
std::vector<Vector> integrate_ode(const OdeField& field, const Vector& y0, const TimeGrid& grid);

/// Evaluates `fn(x, t)` and throws IntegrationError naming the time and state
/// if the result is not finite or has the wrong size.
Vector evaluate_checked(const DriftFn& fn, const Vector& x, double t, Eigen::Index expected_dim,
                        const char* what);

}  // namespace cdpf
