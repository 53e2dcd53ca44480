#pragma once

#include "cdpf/particle_filter.hpp"
#include "cdpf/rao_blackwell.hpp"
#include "cdpf/sde_core.hpp"

#include <cstdint>
#include <vector>

namespace cdpf {

// ---------------------------------------------------------------------------
// Noisy pendulum: dx1/dt = x2, dx2 = -a^2 sin(x1) dt + dbeta, beta of diffusion q.

struct PendulumParams {
  double a = 1.0;
  double q = 0.01;
};

/// Validates a > 0, q > 0.
PendulumParams pendulum(double a, double q);

/// Full drift (x2, -a^2 sin x1) and its Jacobian.
Vector pendulum_drift(const PendulumParams& p, const Vector& x);
Matrix pendulum_jacobian(const PendulumParams& p, const Vector& x);

/// Split model: x1 deterministic, x2 stochastic with L = 1, Q = q.
SplitSdeModel pendulum_model(const PendulumParams& p, StateSampler initial = {});

/// Gaussian initial law N(mean, diag(var)).
StateSampler gaussian_sampler(Vector mean, Vector var);

struct PendulumData {
  std::vector<double> times;        // t_0 .. t_n
  std::vector<Vector> truth;        // state at t_0 .. t_n
  std::vector<Measurement> measurements;  // y_k = x1(t_k) + N(0, sigma2), k = 1..n
};

/// Fine-grid Euler simulation with `n_steps` steps per measurement interval
/// (q = 0 is allowed here and gives the deterministic pendulum).
PendulumData pendulum_simulate(const PendulumParams& p, const Vector& x0, double dt_meas,
                               int n_meas, double sigma2, int n_steps, std::uint64_t seed);

/// log N(y | x1, sigma2).
MeasurementModel pendulum_measurement(double sigma2);

/// sigma^2 the EKF proposal assumes for a particle: the posterior mean of its
/// Inv-chi^2 statistic when it exists, otherwise the statistic's scale, and
/// `fallback` when the particle carries no statistic.
double pendulum_sigma2_estimate(const Particle& particle, double fallback);

/// EKF-based bridge proposal: predict from (x_{k-1}, P = 0), condition on y_k
/// with the estimated sigma^2 and bridge x2 to the posterior marginal.
ImportanceBuilder pendulum_ekf_importance(const PendulumParams& p, double fallback_sigma2);

/// Inv-chi^2 static-parameter model for the measurement variance.
ConjugateModel pendulum_variance_model(double nu0, double scale0);

// ---------------------------------------------------------------------------
// Stochastic SIR: state (x, y, lambda) with dx/dt = -g e^lambda y x,
// dy/dt = g e^lambda y x - g y, dlambda = sqrt(q) dbeta (standard beta).

struct EpidemicParams {
  double g = 1.0;
  double q = 0.001;
};

/// Validates g > 0, q > 0.
EpidemicParams epidemic(double g, double q);

inline constexpr double kThetaFloor = 1e-12;
inline constexpr double kLambdaBound = 20.0;

/// Clamps x, y to [0, 1] and lambda to [-20, 20].
void clamp_epidemic_state(Vector& x);

/// Split model: (x, y) deterministic, lambda stochastic with L = sqrt(q), Q = 1.
/// Requires q > 0.
SplitSdeModel epidemic_model(const EpidemicParams& p, StateSampler initial = {});

struct EpidemicPrior {
  double infective_alpha = 1.0;
  double infective_beta = 100.0;
  double lambda_mean = 1.6094379124341003;  // ln 5
  double lambda_var = 4.0;
};

/// y(0) ~ Beta, x(0) = 1 - y(0), lambda(0) ~ N.
StateSampler epidemic_initial_sampler(const EpidemicPrior& prior);

/// theta_k = x(t_{k-1}) - x(t_k) + y(t_{k-1}) - y(t_k), floored at kThetaFloor.
double epidemic_theta(const Vector& x_prev, const Vector& x_k);
/// Same, taking the end points of a path over [t_{k-1}, t_k].
double epidemic_theta(const std::vector<Vector>& path);

struct CountSeries {
  std::vector<double> times;
  std::vector<long> counts;
};

struct EpidemicData {
  std::vector<double> times;  // t_0 .. t_n
  std::vector<Vector> truth;  // state at t_0 .. t_n
  std::vector<double> theta;  // theta_1 .. theta_n (unfloored)
  CountSeries counts;         // d_k ~ Poisson(N_true theta_k)
};

/// Fine-grid simulation (q = 0 allowed for a constant contact number).
EpidemicData epidemic_simulate(const EpidemicParams& p, const Vector& x0, double population,
                               double dt_meas, int n_meas, int n_steps, std::uint64_t seed);

std::vector<Measurement> to_measurements(const CountSeries& counts);

/// Gamma-Poisson model for the population size. The particle aux vector keeps
/// (largest theta so far, end time of that interval).
ConjugateModel epidemic_population_model(double alpha0, double beta0);

/// Sets the aux bookkeeping expected by epidemic_population_model.
void attach_epidemic_aux(ParticleSet& set);

/// EKF-based bridge proposal for lambda: the count is linearized as
/// d ~ N(N_hat (c - x_k - y_k), N_hat theta_hat + theta_hat^2 Var N) with
/// c = x_{k-1} + y_{k-1} and (N_hat, Var N) from the particle's Gamma statistic.
ImportanceBuilder epidemic_ekf_importance(const EpidemicParams& p);

Vector epidemic_drift(const EpidemicParams& p, const Vector& x);
Matrix epidemic_jacobian(const EpidemicParams& p, const Vector& x);

/// sum_i w_i exp(lambda_i) x_i
double epidemic_indicator(const ParticleSet& set);

struct EpidemicForecast {
  std::vector<double> peak_times;    // end time of the interval with the largest theta
  std::vector<double> total_deaths;  // N z(horizon), z = 1 - x - y
  std::vector<double> future_deaths; // N (z(horizon) - z(now))
};

/// Forward simulation of n_sims draws (ancestors picked by systematic
/// resampling of the weights, N drawn from each ancestor's Gamma posterior)
/// from the set time to `horizon` in steps of dt_meas.
EpidemicForecast epidemic_predict(const ParticleSet& set, const EpidemicParams& p, double horizon,
                                  double dt_meas, int n_steps, std::size_t n_sims,
                                  std::uint64_t seed);

}  // namespace cdpf
