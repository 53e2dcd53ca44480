#include "cdpf/models.hpp"

#include "cdpf/conjugate.hpp"
#include "cdpf/errors.hpp"
#include "cdpf/importance_builder.hpp"
#include "cdpf/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace cdpf {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Vector scalar_vec(double v) { return Vector::Constant(1, v); }

}  // namespace

// ---------------------------------------------------------------------------
// Pendulum

PendulumParams pendulum(double a, double q) {
  require(std::isfinite(a) && a > 0.0, "pendulum: a must be positive");
  require(std::isfinite(q) && q > 0.0, "pendulum: q must be positive");
  return {a, q};
}

Vector pendulum_drift(const PendulumParams& p, const Vector& x) {
  Vector f(2);
  f << x(1), -p.a * p.a * std::sin(x(0));
  return f;
}

Matrix pendulum_jacobian(const PendulumParams& p, const Vector& x) {
  Matrix j(2, 2);
  j << 0.0, 1.0, -p.a * p.a * std::cos(x(0)), 0.0;
  return j;
}

namespace {

SplitSdeModel pendulum_dynamics(const PendulumParams& p, StateSampler initial) {
  SplitSdeModel m;
  m.dim_det = 1;
  m.dim_stoch = 1;
  m.dim_noise = 1;
  m.det_field = [](const Vector& x, double) { return scalar_vec(x(1)); };
  const double a2 = p.a * p.a;
  m.stoch_drift = [a2](const Vector& x, double) { return scalar_vec(-a2 * std::sin(x(0))); };
  m.dispersion = TimeMatrix::constant(scalar(1.0));
  m.diffusion = DiffusionSpec::constant(scalar(p.q > 0.0 ? p.q : 1.0));
  m.initial_sampler = std::move(initial);
  return m;
}

}  // namespace

SplitSdeModel pendulum_model(const PendulumParams& p, StateSampler initial) {
  pendulum(p.a, p.q);
  SplitSdeModel m = pendulum_dynamics(p, std::move(initial));
  m.validate();
  return m;
}

StateSampler gaussian_sampler(Vector mean, Vector var) {
  require(mean.size() == var.size(), "gaussian_sampler: mean/variance size mismatch");
  require((var.array() >= 0.0).all(), "gaussian_sampler: negative variance");
  const Vector sd = var.cwiseSqrt();
  return [mean = std::move(mean), sd](Rng& rng) -> Vector {
    return mean + sd.cwiseProduct(standard_normal(mean.size(), rng));
  };
}

PendulumData pendulum_simulate(const PendulumParams& p, const Vector& x0, double dt_meas,
                               int n_meas, double sigma2, int n_steps, std::uint64_t seed) {
  require(x0.size() == 2, "pendulum_simulate: state must have dimension 2");
  require(p.a > 0.0 && p.q >= 0.0, "pendulum_simulate: need a > 0 and q >= 0");
  require(dt_meas > 0.0 && n_meas >= 1 && n_steps >= 1, "pendulum_simulate: bad time grid");
  require(sigma2 >= 0.0, "pendulum_simulate: negative measurement variance");
  const double noise_scale = std::sqrt(p.q);
  SplitSdeModel m = pendulum_dynamics(p, {});
  m.dispersion = TimeMatrix::constant(scalar(noise_scale));
  m.diffusion = DiffusionSpec::constant(scalar(1.0));

  PendulumData out;
  out.times.push_back(0.0);
  out.truth.push_back(x0);
  Vector x = x0;
  const double sd = std::sqrt(sigma2);
  for (int k = 1; k <= n_meas; ++k) {
    const TimeGrid grid = TimeGrid::make((k - 1) * dt_meas, k * dt_meas, n_steps);
    Rng rng = make_stream(seed, StreamPurpose::kSimulate, k, 0);
    const BrownianIncrements incs = sample_brownian_increments(grid, m.diffusion, rng);
    x = integrate_split_sde(m, x, grid, incs).back();
    Rng meas_rng = make_stream(seed, StreamPurpose::kMeasurement, k, 0);
    const double noise = std::normal_distribution<double>(0.0, 1.0)(meas_rng);
    out.times.push_back(grid.t1);
    out.truth.push_back(x);
    out.measurements.push_back({grid.t1, scalar_vec(x(0) + sd * noise)});
  }
  return out;
}

MeasurementModel pendulum_measurement(double sigma2) {
  require(sigma2 > 0.0, "pendulum_measurement: variance must be positive");
  const double log_norm = -0.5 * std::log(2.0 * M_PI * sigma2);
  return {[sigma2, log_norm](const Vector& y, const Vector& x) {
    const double r = y(0) - x(0);
    return log_norm - 0.5 * r * r / sigma2;
  }};
}

double pendulum_sigma2_estimate(const Particle& particle, double fallback) {
  if (particle.stats.size() != 2) return fallback;
  const double nu = particle.stats(0);
  const double s2 = particle.stats(1);
  return nu > 2.0 ? nu * s2 / (nu - 2.0) : s2;
}

ImportanceBuilder pendulum_ekf_importance(const PendulumParams& p, double fallback_sigma2) {
  pendulum(p.a, p.q);
  require(fallback_sigma2 > 0.0, "pendulum_ekf_importance: variance must be positive");
  return [p, fallback_sigma2](const Particle& particle, const Measurement& y_k,
                              const TimeGrid& grid) {
    const DriftFn drift = [p](const Vector& x, double) { return pendulum_drift(p, x); };
    const JacobianFn jac = [p](const Vector& x, double) { return pendulum_jacobian(p, x); };
    Matrix q_eff = Matrix::Zero(2, 2);
    q_eff(1, 1) = p.q;
    const EkfMoments prior{particle.state, Matrix::Zero(2, 2)};
    const EkfMoments predicted = ekf_predict(prior, drift, jac, q_eff, grid);
    Matrix h(1, 2);
    h << 1.0, 0.0;
    const double r = pendulum_sigma2_estimate(particle, fallback_sigma2);
    const EkfMoments post = ekf_condition(predicted, h, scalar(r), y_k.value);
    const std::array<Eigen::Index, 1> idx{1};
    const double interval = grid.t1 - grid.t0;
    const BridgeSpec bridge = extract_bridge(post, idx, interval, scalar(p.q));
    return build_bridge(particle.state.tail(1), bridge);
  };
}

ConjugateModel pendulum_variance_model(double nu0, double scale0) {
  ConjugateModel m;
  m.family = invchi2_family(nu0, scale0);
  m.feature = [](const Vector&, const Vector& x_k) { return scalar_vec(x_k(0)); };
  return m;
}

// ---------------------------------------------------------------------------
// Epidemic

EpidemicParams epidemic(double g, double q) {
  require(std::isfinite(g) && g > 0.0, "epidemic: g must be positive");
  require(std::isfinite(q) && q > 0.0, "epidemic: q must be positive");
  return {g, q};
}

void clamp_epidemic_state(Vector& x) {
  x(0) = std::clamp(x(0), 0.0, 1.0);
  x(1) = std::clamp(x(1), 0.0, 1.0);
  x(2) = std::clamp(x(2), -kLambdaBound, kLambdaBound);
}

Vector epidemic_drift(const EpidemicParams& p, const Vector& x) {
  const double inc = p.g * std::exp(x(2)) * x(1) * x(0);
  Vector f(3);
  f << -inc, inc - p.g * x(1), 0.0;
  return f;
}

Matrix epidemic_jacobian(const EpidemicParams& p, const Vector& x) {
  const double c = p.g * std::exp(x(2));
  const double inc = c * x(1) * x(0);
  Matrix j(3, 3);
  j << -c * x(1), -c * x(0), -inc,
       c * x(1), c * x(0) - p.g, inc,
       0.0, 0.0, 0.0;
  return j;
}

namespace {

SplitSdeModel epidemic_dynamics(const EpidemicParams& p, StateSampler initial) {
  SplitSdeModel m;
  m.dim_det = 2;
  m.dim_stoch = 1;
  m.dim_noise = 1;
  const double g = p.g;
  m.det_field = [g](const Vector& x, double) {
    const double inc = g * std::exp(x(2)) * x(1) * x(0);
    Vector f(2);
    f << -inc, inc - g * x(1);
    return f;
  };
  m.stoch_drift = [](const Vector&, double) { return Vector::Zero(1).eval(); };
  m.dispersion = TimeMatrix::constant(scalar(std::sqrt(p.q)));
  m.diffusion = DiffusionSpec::constant(scalar(1.0));
  m.initial_sampler = std::move(initial);
  m.project = clamp_epidemic_state;
  return m;
}

double sample_beta(double a, double b, Rng& rng) {
  const double x = std::gamma_distribution<double>(a, 1.0)(rng);
  const double y = std::gamma_distribution<double>(b, 1.0)(rng);
  return x / (x + y);
}

}  // namespace

SplitSdeModel epidemic_model(const EpidemicParams& p, StateSampler initial) {
  epidemic(p.g, p.q);
  SplitSdeModel m = epidemic_dynamics(p, std::move(initial));
  m.validate();
  return m;
}

StateSampler epidemic_initial_sampler(const EpidemicPrior& prior) {
  require(prior.infective_alpha > 0.0 && prior.infective_beta > 0.0,
          "epidemic_initial_sampler: Beta parameters must be positive");
  require(prior.lambda_var >= 0.0, "epidemic_initial_sampler: negative variance");
  return [prior](Rng& rng) {
    const double y0 = sample_beta(prior.infective_alpha, prior.infective_beta, rng);
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
    Vector x(3);
    x << 1.0 - y0, y0, prior.lambda_mean + std::sqrt(prior.lambda_var) * z;
    return x;
  };
}

double epidemic_theta(const Vector& x_prev, const Vector& x_k) {
  const double theta = (x_prev(0) + x_prev(1)) - (x_k(0) + x_k(1));
  return std::max(theta, kThetaFloor);
}

double epidemic_theta(const std::vector<Vector>& path) {
  require(path.size() >= 2, "epidemic_theta: path needs at least two points");
  return epidemic_theta(path.front(), path.back());
}

EpidemicData epidemic_simulate(const EpidemicParams& p, const Vector& x0, double population,
                               double dt_meas, int n_meas, int n_steps, std::uint64_t seed) {
  require(x0.size() == 3, "epidemic_simulate: state must have dimension 3");
  require(p.g > 0.0 && p.q >= 0.0, "epidemic_simulate: need g > 0 and q >= 0");
  require(population > 0.0, "epidemic_simulate: population must be positive");
  require(dt_meas > 0.0 && n_meas >= 1 && n_steps >= 1, "epidemic_simulate: bad time grid");
  const SplitSdeModel m = epidemic_dynamics(p, {});

  EpidemicData out;
  out.times.push_back(0.0);
  out.truth.push_back(x0);
  Vector x = x0;
  for (int k = 1; k <= n_meas; ++k) {
    const TimeGrid grid = TimeGrid::make((k - 1) * dt_meas, k * dt_meas, n_steps);
    Rng rng = make_stream(seed, StreamPurpose::kSimulate, k, 0);
    const BrownianIncrements incs = sample_brownian_increments(grid, m.diffusion, rng);
    const Vector next = integrate_split_sde(m, x, grid, incs).back();
    const double theta = (x(0) + x(1)) - (next(0) + next(1));
    Rng meas_rng = make_stream(seed, StreamPurpose::kMeasurement, k, 0);
    const double rate = population * std::max(theta, 0.0);
    const long d = rate > 0.0 ? std::poisson_distribution<long>(rate)(meas_rng) : 0L;
    x = next;
    out.times.push_back(grid.t1);
    out.truth.push_back(x);
    out.theta.push_back(theta);
    out.counts.times.push_back(grid.t1);
    out.counts.counts.push_back(d);
  }
  return out;
}

std::vector<Measurement> to_measurements(const CountSeries& counts) {
  require(counts.times.size() == counts.counts.size(), "to_measurements: size mismatch");
  std::vector<Measurement> out;
  out.reserve(counts.times.size());
  for (std::size_t k = 0; k < counts.times.size(); ++k) {
    out.push_back({counts.times[k], scalar_vec(static_cast<double>(counts.counts[k]))});
  }
  return out;
}

ConjugateModel epidemic_population_model(double alpha0, double beta0) {
  ConjugateModel m;
  m.family = gamma_poisson_family(alpha0, beta0);
  m.feature = [](const Vector& x_prev, const Vector& x_k) {
    return scalar_vec(epidemic_theta(x_prev, x_k));
  };
  m.on_propagated = [](const Vector& x_prev, Particle& p, double t_k) {
    const double theta = epidemic_theta(x_prev, p.state);
    if (p.aux.size() != 2) p.aux = Vector::Constant(2, -1.0);
    if (theta > p.aux(0)) {
      p.aux(0) = theta;
      p.aux(1) = t_k;
    }
  };
  return m;
}

void attach_epidemic_aux(ParticleSet& set) {
  for (Particle& p : set.particles()) {
    p.aux.resize(2);
    p.aux << -1.0, set.time();
  }
}

ImportanceBuilder epidemic_ekf_importance(const EpidemicParams& p) {
  epidemic(p.g, p.q);
  const DriftFn zero_drift = [](const Vector&, double) { return Vector::Zero(1).eval(); };
  const TimeMatrix dispersion = TimeMatrix::constant(scalar(std::sqrt(p.q)));
  return [p, zero_drift, dispersion](const Particle& particle, const Measurement& y_k,
                                     const TimeGrid& grid) {
    const Vector& x = particle.state;
    double n_hat = 1.0;
    double n_var = 0.0;
    if (particle.stats.size() == 2) {
      n_hat = particle.stats(0) / particle.stats(1);
      n_var = n_hat / particle.stats(1);
    }
    const DriftFn drift = [p](const Vector& s, double) { return epidemic_drift(p, s); };
    const JacobianFn jac = [p](const Vector& s, double) { return epidemic_jacobian(p, s); };
    Matrix q_eff = Matrix::Zero(3, 3);
    q_eff(2, 2) = p.q;
    // A large contact rate makes the Euler moment recursion unstable over one
    // interval; such particles keep the prior proposal.
    try {
      const EkfMoments predicted = ekf_predict({x, Matrix::Zero(3, 3)}, drift, jac, q_eff, grid);
      const double c = x(0) + x(1);
      const double theta_hat =
          std::max(c - predicted.mean(0) - predicted.mean(1), kThetaFloor);
      Matrix h(1, 3);
      h << -n_hat, -n_hat, 0.0;
      const double r = std::max(n_hat * theta_hat, 1.0) + theta_hat * theta_hat * n_var;
      const Vector y_eff = scalar_vec(y_k.value(0) - n_hat * c);
      const EkfMoments post = ekf_condition(predicted, h, scalar(r), y_eff);
      const std::array<Eigen::Index, 1> idx{2};
      const double interval = grid.t1 - grid.t0;
      const BridgeSpec bridge = extract_bridge(post, idx, interval, scalar(1.0));
      if (bridge.target_mean.allFinite() && bridge.target_cov.allFinite()) {
        return build_bridge(x.tail(1), bridge);
      }
    } catch (const IntegrationError&) {
    } catch (const MatrixInversionError&) {
    }
    return ImportanceSpec{zero_drift, dispersion};
  };
}

double epidemic_indicator(const ParticleSet& set) {
  const std::vector<double> w = set.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Vector& x = set[i].state;
    acc += w[i] * std::exp(x(2)) * x(0);
  }
  return acc;
}

EpidemicForecast epidemic_predict(const ParticleSet& set, const EpidemicParams& p, double horizon,
                                  double dt_meas, int n_steps, std::size_t n_sims,
                                  std::uint64_t seed) {
  epidemic(p.g, p.q);
  require(set.size() > 0, "epidemic_predict: empty particle set");
  require(dt_meas > 0.0 && n_steps >= 1 && n_sims >= 1, "epidemic_predict: bad arguments");
  require(horizon >= set.time(), "epidemic_predict: horizon before the current time");
  const SplitSdeModel m = epidemic_dynamics(p, {});
  const std::vector<double> w = set.weights();

  Rng pick = make_stream(seed, StreamPurpose::kPredict, 0, 0);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(pick);
  // Systematic draw of n_sims ancestors.
  std::vector<std::size_t> ancestors(n_sims);
  double cum = w[0];
  std::size_t j = 0;
  for (std::size_t s = 0; s < n_sims; ++s) {
    const double target = (static_cast<double>(s) + u) / static_cast<double>(n_sims);
    while (cum < target && j + 1 < w.size()) cum += w[++j];
    ancestors[s] = j;
  }

  const int n_intervals =
      static_cast<int>(std::ceil((horizon - set.time()) / dt_meas - 1e-9));
  EpidemicForecast out;
  out.peak_times.resize(n_sims);
  out.total_deaths.resize(n_sims);
  out.future_deaths.resize(n_sims);
  for (std::size_t s = 0; s < n_sims; ++s) {
    const Particle& anc = set[ancestors[s]];
    Rng rng = make_stream(seed, StreamPurpose::kPredict, 1, s);
    double population = 1.0;
    if (anc.stats.size() == 2) {
      population = std::gamma_distribution<double>(anc.stats(0), 1.0 / anc.stats(1))(rng);
    }
    double best = anc.aux.size() == 2 ? anc.aux(0) : -1.0;
    double best_time = anc.aux.size() == 2 ? anc.aux(1) : set.time();
    Vector x = anc.state;
    const double z_now = 1.0 - x(0) - x(1);
    double t = set.time();
    for (int j = 0; j < n_intervals; ++j) {
      const double t_next = std::min(t + dt_meas, horizon);
      if (t_next <= t) break;
      const TimeGrid grid = TimeGrid::make(t, t_next, n_steps);
      const BrownianIncrements incs = sample_brownian_increments(grid, m.diffusion, rng);
      const Vector next = integrate_split_sde(m, x, grid, incs).back();
      const double theta = epidemic_theta(x, next);
      if (theta > best) {
        best = theta;
        best_time = t_next;
      }
      x = next;
      t = t_next;
    }
    const double z_end = 1.0 - x(0) - x(1);
    out.peak_times[s] = best_time;
    out.total_deaths[s] = population * z_end;
    out.future_deaths[s] = population * (z_end - z_now);
  }
  return out;
}

}  // namespace cdpf
