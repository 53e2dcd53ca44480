#include "cdpf/harness/experiments.hpp"

#include <cdpf/conjugate.hpp>
#include <cdpf/girsanov.hpp>
#include <cdpf/random.hpp>

#include <cmath>
#include <functional>
#include <ostream>
#include <string>

namespace cdpf::harness {

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector scalar_vec(double v) { return Vector::Constant(1, v); }

bool kl_constant() {
  const TimeGrid grid = TimeGrid::make(0.0, 2.0, 50);
  std::vector<std::vector<Vector>> paths(3, std::vector<Vector>(51, scalar_vec(0.0)));
  const double kl = estimate_kl([](const Vector&, double) { return scalar_vec(1.0); },
                                [](const Vector&, double) { return scalar_vec(0.0); }, scalar(1.0),
                                paths, grid);
  return std::abs(kl - 1.0) < 1e-12;
}

bool bootstrap_zero() {
  const PendulumParams p = pendulum(1.0, 0.01);
  const SplitSdeModel model = pendulum_model(p);
  const ImportanceBuilder prior = prior_importance(model);
  const TimeGrid grid = TimeGrid::make(0.0, 0.1, 10);
  Particle particle;
  particle.state = Vector::Zero(2);
  particle.state << 1.5, 0.0;
  for (int i = 0; i < 20; ++i) {
    Rng rng = make_stream(7, StreamPurpose::kPropagate, 0, i);
    const BrownianIncrements incs = sample_brownian_increments(grid, model.diffusion, rng);
    const auto st = propagate_coupled(model, prior(particle, {0.1, scalar_vec(0.0)}, grid),
                                      particle.state, grid, incs);
    if (st.llr.value != 0.0) return false;
  }
  return true;
}

bool conjugate_batch() {
  const InvChi2Family fam(2.0, 0.2);
  Vector t = fam.prior();
  double ss = 0.0;
  Rng rng = make_stream(3, StreamPurpose::kSimulate, 0, 0);
  const Vector y_batch = standard_normal(50, rng);
  for (int k = 0; k < 50; ++k) {
    t = fam.update(t, scalar_vec(0.0), scalar_vec(y_batch(k)));
    ss += y_batch(k) * y_batch(k);
  }
  const double nu = 52.0;
  const double s2 = (2.0 * 0.2 + ss) / nu;
  return std::abs(t(0) - nu) < 1e-12 && std::abs(t(1) - s2) < 1e-12 * s2;
}

bool martingale() {
  SdeModel model;
  model.dim_state = 1;
  model.dim_noise = 1;
  model.drift = [](const Vector& x, double) { return x.array().sin().matrix().eval(); };
  model.dispersion = TimeMatrix::constant(scalar(1.0));
  model.diffusion = DiffusionSpec::constant(scalar(1.0));
  const ImportanceSpec imp{[](const Vector&, double) { return scalar_vec(0.0); },
                           TimeMatrix::constant(scalar(1.0))};
  const TimeGrid grid = TimeGrid::make(0.0, 1.0, 100);
  const int n = 20000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_stream(11, StreamPurpose::kPropagate, 0, i);
    const BrownianIncrements incs = sample_brownian_increments(grid, model.diffusion, rng);
    const double z = propagate_coupled(model, imp, scalar_vec(0.0), grid, incs).likelihood_ratio();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
  return std::abs(mean - 1.0) < 3.0 * se;
}

bool kalman_one_step() {
  // One OU interval with the bootstrap filter against the Euler-chain Kalman filter.
  const double q = 0.5;
  const double sigma2 = 0.2;
  const int n_steps = 10;
  const double dt = 0.1 / n_steps;
  const SdeModel model = ou_model(1.0, q, gaussian_sampler(scalar_vec(1.0), scalar_vec(0.3)));
  FilterOptions opt;
  opt.n_steps = n_steps;
  ParticleSet set = ParticleSet::initialize(20000, model.initial_sampler, 5, 0.0);
  const Measurement y{0.1, scalar_vec(0.7)};
  const StepReport r = cd_sir_step(set, model, prior_importance(model),
                                   first_component_measurement(sigma2), y, opt);
  double m = 1.0;
  double p = 0.3;
  for (int j = 0; j < n_steps; ++j) {
    m *= 1.0 - dt;
    p = (1.0 - dt) * (1.0 - dt) * p + q * dt;
  }
  const double k = p / (p + sigma2);
  const double m_post = m + k * (0.7 - m);
  const double sd_post = std::sqrt((1.0 - k) * p);
  return std::abs(r.summary.mean(0) - m_post) < 4.0 * sd_post / std::sqrt(20000.0);
}

}  // namespace

int cmd_selftest(std::ostream& out) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"kl_constant_drift", kl_constant},
      {"bootstrap_zero_llr", bootstrap_zero},
      {"invchi2_batch_update", conjugate_batch},
      {"likelihood_ratio_mean_one", martingale},
      {"ou_kalman_step", kalman_one_step},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    std::string note;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      note = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "PASS " : "FAIL ") << name << note << '\n';
    if (!ok) ++failures;
  }
  return failures;
}

}  // namespace cdpf::harness
