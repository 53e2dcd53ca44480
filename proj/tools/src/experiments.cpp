#include "cdpf/harness/experiments.hpp"

#include "cdpf/harness/csv.hpp"

#include <cdpf/conjugate.hpp>
#include <cdpf/errors.hpp>
#include <cdpf/girsanov.hpp>
#include <cdpf/parallel.hpp>
#include <cdpf/random.hpp>

#include <cmath>
#include <map>
#include <ostream>
#include <random>

namespace cdpf::harness {

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector scalar_vec(double v) { return Vector::Constant(1, v); }

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

SdeModel ou_model(double rate, double q, StateSampler initial) {
  SdeModel m;
  m.dim_state = 1;
  m.dim_noise = 1;
  m.drift = [rate](const Vector& x, double) { return (-rate * x).eval(); };
  m.dispersion = TimeMatrix::constant(scalar(1.0));
  m.diffusion = DiffusionSpec::constant(scalar(q));
  m.initial_sampler = std::move(initial);
  m.validate();
  return m;
}

SplitSdeModel iou_model(double rate, double q, StateSampler initial) {
  SplitSdeModel m;
  m.dim_det = 1;
  m.dim_stoch = 1;
  m.dim_noise = 1;
  m.det_field = [](const Vector& x, double) { return scalar_vec(x(1)); };
  m.stoch_drift = [rate](const Vector& x, double) { return scalar_vec(-rate * x(1)); };
  m.dispersion = TimeMatrix::constant(scalar(1.0));
  m.diffusion = DiffusionSpec::constant(scalar(q));
  m.initial_sampler = std::move(initial);
  m.validate();
  return m;
}

CondGaussModel cgauss_model(double q, double sigma2, double x1_mean, double x1_var,
                            StateSampler z_initial) {
  CondGaussModel m;
  m.dim_linear = 1;
  m.linear_matrix = [](const Vector&, double) { return scalar(-1.0); };
  m.linear_offset = [](const Vector& z, double) { return scalar_vec(z(1)); };
  m.linear_dispersion = [](const Vector&, double) { return scalar(0.0); };
  m.linear_diffusion = TimeMatrix::constant(scalar(1.0));
  SplitSdeModel& z = m.nonlinear;
  z.dim_det = 1;
  z.dim_stoch = 1;
  z.dim_noise = 1;
  z.det_field = [](const Vector& s, double) { return scalar_vec(s(1)); };
  z.stoch_drift = [](const Vector& s, double) { return scalar_vec(-s(1)); };
  z.dispersion = TimeMatrix::constant(scalar(1.0));
  z.diffusion = DiffusionSpec::constant(scalar(q));
  z.initial_sampler = std::move(z_initial);
  m.measurement_matrix = [](const Vector&) { return scalar(1.0); };
  m.measurement_cov = [sigma2](const Vector&) { return scalar(sigma2); };
  m.initial_block = {scalar_vec(x1_mean), scalar(x1_var)};
  m.validate();
  return m;
}

SplitSdeModel cgauss_augmented(double q, StateSampler initial) {
  SplitSdeModel m;
  m.dim_det = 2;
  m.dim_stoch = 1;
  m.dim_noise = 1;
  m.det_field = [](const Vector& x, double) {
    Vector f(2);
    f << -x(0) + x(2), x(2);
    return f;
  };
  m.stoch_drift = [](const Vector& x, double) { return scalar_vec(-x(2)); };
  m.dispersion = TimeMatrix::constant(scalar(1.0));
  m.diffusion = DiffusionSpec::constant(scalar(q));
  m.initial_sampler = std::move(initial);
  m.validate();
  return m;
}

MeasurementModel first_component_measurement(double sigma2) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("measurement variance must be positive");
  const double log_norm = -0.5 * std::log(2.0 * M_PI * sigma2);
  return {[sigma2, log_norm](const Vector& y, const Vector& x) {
    const double r = y(0) - x(0);
    return log_norm - 0.5 * r * r / sigma2;
  }};
}

namespace {

template <class Model, class Integrate>
SimulatedData simulate_with(const Model& model, const Vector& x0, double dt_meas, int n_meas,
                            int fine_steps, double sigma2, std::uint64_t seed,
                            Integrate integrate) {
  SimulatedData out;
  out.times.push_back(0.0);
  out.truth.push_back(x0);
  Vector x = x0;
  const double sd = std::sqrt(sigma2);
  for (int k = 1; k <= n_meas; ++k) {
    const TimeGrid grid = TimeGrid::make((k - 1) * dt_meas, k * dt_meas, fine_steps);
    Rng rng = make_stream(seed, StreamPurpose::kSimulate, k, 0);
    const BrownianIncrements incs = sample_brownian_increments(grid, model.diffusion, rng);
    x = integrate(model, x, grid, incs).back();
    Rng meas_rng = make_stream(seed, StreamPurpose::kMeasurement, k, 0);
    const double noise = std::normal_distribution<double>(0.0, 1.0)(meas_rng);
    out.times.push_back(grid.t1);
    out.truth.push_back(x);
    out.measurements.push_back({grid.t1, scalar_vec(x(0) + sd * noise)});
  }
  return out;
}

}  // namespace

SimulatedData simulate_gaussian(const SdeModel& model, const Vector& x0, double dt_meas,
                                int n_meas, int fine_steps, double sigma2, std::uint64_t seed) {
  return simulate_with(model, x0, dt_meas, n_meas, fine_steps, sigma2, seed,
                       [](const SdeModel& m, const Vector& x, const TimeGrid& g,
                          const BrownianIncrements& incs) { return integrate_sde(m, x, g, incs); });
}

SimulatedData simulate_gaussian(const SplitSdeModel& model, const Vector& x0, double dt_meas,
                                int n_meas, int fine_steps, double sigma2, std::uint64_t seed) {
  return simulate_with(model, x0, dt_meas, n_meas, fine_steps, sigma2, seed,
                       [](const SplitSdeModel& m, const Vector& x, const TimeGrid& g,
                          const BrownianIncrements& incs) {
                         return integrate_split_sde(m, x, g, incs);
                       });
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::vector<std::string> state_names(const std::string& model) {
  if (model == "pendulum" || model == "iou") return {"x1", "x2"};
  if (model == "epidemic") return {"x", "y", "lambda"};
  if (model == "cgauss") return {"x1", "x2", "x3"};
  return {"x"};
}

std::string resolved_importance(const ExperimentConfig& c) {
  if (c.importance == "ekf" && (c.model == "pendulum" || c.model == "epidemic")) return "ekf";
  return "prior";
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

Table truth_table(const std::string& model, const std::vector<double>& times,
                  const std::vector<Vector>& truth) {
  Table t;
  t.header = {"t"};
  for (const auto& n : state_names(model)) t.header.push_back(n);
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> row{times[k]};
    for (Eigen::Index i = 0; i < truth[k].size(); ++i) row.push_back(truth[k](i));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table gaussian_measurement_table(const std::vector<Measurement>& ms) {
  Table t;
  t.header = {"t", "y"};
  for (const auto& m : ms) t.rows.push_back({m.time, m.value(0)});
  return t;
}

StateSampler config_sampler(const ExperimentConfig& c) {
  return gaussian_sampler(to_vector(c.prior_mean), to_vector(c.prior_var));
}

Vector epidemic_truth_initial(const ExperimentConfig& c) {
  if (!c.x0.empty()) return to_vector(c.x0);
  EpidemicPrior prior;
  prior.lambda_mean = std::log(c.sigma_true);
  prior.lambda_var = 0.0;
  Rng rng = make_stream(c.seed, StreamPurpose::kInitial, 0, 0);
  return epidemic_initial_sampler(prior)(rng);
}

}  // namespace

std::vector<std::filesystem::path> cmd_simulate(const ExperimentConfig& config) {
  const ExperimentConfig c = with_model_defaults(config);
  c.validate();
  ensure_dir(c.out);
  const Provenance prov = provenance(c);
  const auto truth_path = c.out / "truth.csv";
  const auto meas_path = c.out / "measurements.csv";

  if (c.model == "epidemic") {
    const EpidemicParams params{c.g, c.q_true};
    const Vector x0 = epidemic_truth_initial(c);
    const EpidemicData data =
        epidemic_simulate(params, x0, c.population, c.dt, c.n_meas, c.fine_steps, c.seed);
    Table truth = truth_table(c.model, data.times, data.truth);
    truth.header.push_back("theta");
    for (std::size_t k = 0; k < truth.rows.size(); ++k) {
      truth.rows[k].push_back(k == 0 ? 0.0 : data.theta[k - 1]);
    }
    write_csv(truth_path, truth, prov);
    Table meas;
    meas.header = {"week", "deaths"};
    for (std::size_t k = 0; k < data.counts.counts.size(); ++k) {
      meas.rows.push_back({static_cast<double>(k + 1), static_cast<double>(data.counts.counts[k])});
    }
    write_csv(meas_path, meas, prov);
    return {truth_path, meas_path};
  }

  SimulatedData data;
  const Vector x0 = to_vector(c.x0);
  if (c.model == "pendulum") {
    PendulumData p = pendulum_simulate(pendulum(c.a, c.q), x0, c.dt, c.n_meas, c.sigma2,
                                       c.fine_steps, c.seed);
    data = {std::move(p.times), std::move(p.truth), std::move(p.measurements)};
  } else if (c.model == "ou") {
    data = simulate_gaussian(ou_model(c.rate, c.q), x0, c.dt, c.n_meas, c.fine_steps, c.sigma2,
                             c.seed);
  } else if (c.model == "iou") {
    data = simulate_gaussian(iou_model(c.rate, c.q), x0, c.dt, c.n_meas, c.fine_steps, c.sigma2,
                             c.seed);
  } else {
    data = simulate_gaussian(cgauss_augmented(c.q), x0, c.dt, c.n_meas, c.fine_steps, c.sigma2,
                             c.seed);
  }
  write_csv(truth_path, truth_table(c.model, data.times, data.truth), prov);
  write_csv(meas_path, gaussian_measurement_table(data.measurements), prov);
  return {truth_path, meas_path};
}

std::vector<Measurement> read_measurements(const std::filesystem::path& path,
                                           const std::string& model) {
  const Table t = read_csv(path);
  std::vector<Measurement> out;
  if (model == "epidemic") {
    if (t.header != std::vector<std::string>{"week", "deaths"}) {
      throw IoError(path.string() + ": expected header week,deaths");
    }
    for (const auto& row : t.rows) {
      if (row[0] != std::floor(row[0]) || row[1] < 0.0 || row[1] != std::floor(row[1])) {
        throw IoError(path.string() + ": weeks and deaths must be nonnegative integers");
      }
      out.push_back({row[0], scalar_vec(row[1])});
    }
    return out;
  }
  if (t.header.size() < 2 || t.header[0] != "t") {
    throw IoError(path.string() + ": expected header t,y");
  }
  for (const auto& row : t.rows) {
    out.push_back({row[0], Eigen::Map<const Vector>(row.data() + 1,
                                                    static_cast<Eigen::Index>(row.size() - 1))});
  }
  return out;
}

namespace {

struct FilterRun {
  ParticleSet set;
  StepFunction step;
  std::shared_ptr<const ConjugateFamily> family;
  std::vector<std::string> names;
};

FilterRun make_filter(const ExperimentConfig& c, double t0) {
  FilterRun run;
  FilterOptions opt;
  opt.ess_threshold = c.ess_threshold;
  opt.n_steps = c.n_steps;
  opt.threads = c.threads;
  const bool ekf = resolved_importance(c) == "ekf";
  run.names = state_names(c.model);

  if (c.model == "ou") {
    auto model = std::make_shared<SdeModel>(ou_model(c.rate, c.q, config_sampler(c)));
    auto meas = first_component_measurement(c.sigma2);
    run.set = ParticleSet::initialize(c.particles, model->initial_sampler, c.seed, t0);
    auto builder = prior_importance(*model);
    run.step = [model, meas, builder, opt](ParticleSet& s, const Measurement& y) {
      return cd_sir_step(s, *model, builder, meas, y, opt);
    };
    return run;
  }
  if (c.model == "iou" || (c.model == "pendulum" && c.filter == "cd_sir_singular")) {
    auto model = std::make_shared<SplitSdeModel>(
        c.model == "iou" ? iou_model(c.rate, c.q, config_sampler(c))
                         : pendulum_model(pendulum(c.a, c.q), config_sampler(c)));
    auto meas = first_component_measurement(c.sigma2);
    run.set = ParticleSet::initialize(c.particles, model->initial_sampler, c.seed, t0);
    auto builder = ekf ? pendulum_ekf_importance(pendulum(c.a, c.q), c.sigma2)
                       : prior_importance(*model);
    run.step = [model, meas, builder, opt](ParticleSet& s, const Measurement& y) {
      return cd_sir_singular_step(s, *model, builder, meas, y, opt);
    };
    return run;
  }
  if (c.model == "cgauss") {
    const Vector mean = to_vector(c.prior_mean);
    const Vector var = to_vector(c.prior_var);
    auto model = std::make_shared<CondGaussModel>(
        cgauss_model(c.q, c.sigma2, mean(0), var(0),
                     gaussian_sampler(mean.tail(2), var.tail(2))));
    run.set = initialize_cond_gauss(*model, c.particles, c.seed, t0);
    auto builder = prior_importance(model->nonlinear);
    run.step = [model, builder, opt](ParticleSet& s, const Measurement& y) {
      return cdrb_sir_step(s, *model, builder, y, opt);
    };
    return run;
  }
  if (c.model == "pendulum") {
    const PendulumParams params = pendulum(c.a, c.q);
    auto model = std::make_shared<SplitSdeModel>(pendulum_model(params, config_sampler(c)));
    auto conj = std::make_shared<ConjugateModel>(pendulum_variance_model(c.prior_nu, c.prior_s2));
    run.set = ParticleSet::initialize(c.particles, model->initial_sampler, c.seed, t0);
    attach_statistics(run.set, *conj->family);
    run.family = conj->family;
    auto builder = ekf ? pendulum_ekf_importance(params, c.prior_s2) : prior_importance(*model);
    run.step = [model, conj, builder, opt](ParticleSet& s, const Measurement& y) {
      return cdrb_param_step(s, *model, builder, *conj, y, opt);
    };
    return run;
  }
  // epidemic
  const EpidemicParams params = epidemic(c.g, c.q);
  EpidemicPrior prior;
  auto model = std::make_shared<SplitSdeModel>(
      epidemic_model(params, epidemic_initial_sampler(prior)));
  auto conj =
      std::make_shared<ConjugateModel>(epidemic_population_model(c.prior_alpha, c.prior_beta));
  run.set = ParticleSet::initialize(c.particles, model->initial_sampler, c.seed, t0);
  attach_statistics(run.set, *conj->family);
  attach_epidemic_aux(run.set);
  run.family = conj->family;
  auto builder = ekf ? epidemic_ekf_importance(params) : prior_importance(*model);
  run.step = [model, conj, builder, opt](ParticleSet& s, const Measurement& y) {
    return cdrb_param_step(s, *model, builder, *conj, y, opt);
  };
  return run;
}

Table particle_dump(const ParticleSet& set, const std::vector<std::string>& names) {
  Table t;
  t.header = {"weight"};
  const Particle& first = set[0];
  const bool block = !first.block.empty();
  if (block) {
    for (Eigen::Index i = 0; i < first.block.dim(); ++i) {
      t.header.push_back("block_mean" + std::to_string(i + 1));
      t.header.push_back("block_var" + std::to_string(i + 1));
    }
  }
  const std::size_t offset = block ? static_cast<std::size_t>(first.block.dim()) : 0;
  for (Eigen::Index i = 0; i < first.state.size(); ++i) {
    const std::size_t idx = offset + static_cast<std::size_t>(i);
    t.header.push_back(idx < names.size() ? names[idx] : "s" + std::to_string(i + 1));
  }
  for (Eigen::Index i = 0; i < first.stats.size(); ++i) {
    t.header.push_back("stat" + std::to_string(i + 1));
  }
  const std::vector<double> w = set.weights();
  for (std::size_t p = 0; p < set.size(); ++p) {
    std::vector<double> row{w[p]};
    if (block) {
      for (Eigen::Index i = 0; i < set[p].block.dim(); ++i) {
        row.push_back(set[p].block.mean(i));
        row.push_back(set[p].block.cov(i, i));
      }
    }
    for (Eigen::Index i = 0; i < set[p].state.size(); ++i) row.push_back(set[p].state(i));
    for (Eigen::Index i = 0; i < set[p].stats.size(); ++i) row.push_back(set[p].stats(i));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

std::vector<std::filesystem::path> cmd_filter(const ExperimentConfig& config) {
  ExperimentConfig c = with_model_defaults(config);
  if (c.measurements.empty()) c.measurements = c.out / "measurements.csv";
  c.validate();
  if (!std::filesystem::exists(c.measurements)) {
    throw IoError("measurement file not found: " + c.measurements.string());
  }
  std::vector<Measurement> ms = read_measurements(c.measurements, c.model);
  double t0 = 0.0;
  if (c.model == "epidemic") {
    for (auto& m : ms) m.time *= c.dt;
    if (!ms.empty()) t0 = ms.front().time - c.dt;
  }
  ensure_dir(c.out);
  const Provenance prov = provenance(c);

  FilterRun run = make_filter(c, t0);
  const std::vector<std::string>& names = run.names;

  Table params;
  if (run.family) {
    const std::string p = run.family->parameter_name();
    params.header = {"k", "t", p + "_mean", p + "_q05", p + "_q50", p + "_q95"};
    if (c.model == "epidemic") {
      params.header.push_back("sigma_mean");
      params.header.push_back("indicator");
    }
  }
  std::vector<std::filesystem::path> files;
  const auto observer = [&](const ParticleSet& set, const Summary& s) {
    if (s.step == 0) return;
    if (run.family) {
      std::vector<Vector> stats;
      stats.reserve(set.size());
      for (const auto& p : set.particles()) stats.push_back(p.stats);
      const std::vector<double> w = set.weights();
      std::vector<double> row{static_cast<double>(s.step), s.time,
                              parameter_posterior_mean(set, *run.family)};
      for (double q : {0.05, 0.5, 0.95}) row.push_back(mixture_quantile(*run.family, stats, w, q));
      if (c.model == "epidemic") {
        double sigma = 0.0;
        for (std::size_t i = 0; i < set.size(); ++i) sigma += w[i] * std::exp(set[i].state(2));
        row.push_back(sigma);
        row.push_back(epidemic_indicator(set));
      }
      params.rows.push_back(std::move(row));
    }
    for (int k : c.dump_steps) {
      if (k == s.step) {
        const auto path = c.out / ("particles_k" + std::to_string(k) + ".csv");
        write_csv(path, particle_dump(set, names), prov);
        files.push_back(path);
      }
    }
  };
  const std::vector<Summary> summaries = run_filter(run.set, ms, run.step, observer);

  Table table;
  table.header = {"k", "t"};
  for (const auto& n : names) table.header.push_back("mean_" + n);
  for (const auto& n : names) table.header.push_back("var_" + n);
  table.header.insert(table.header.end(), {"ess", "log_marginal", "resampled"});
  for (std::size_t k = 1; k < summaries.size(); ++k) {
    const Summary& s = summaries[k];
    std::vector<double> row{static_cast<double>(s.step), s.time};
    for (Eigen::Index i = 0; i < s.mean.size(); ++i) row.push_back(s.mean(i));
    for (Eigen::Index i = 0; i < s.cov.rows(); ++i) row.push_back(s.cov(i, i));
    row.insert(row.end(), {s.ess, s.log_marginal, s.resampled ? 1.0 : 0.0});
    table.rows.push_back(std::move(row));
  }
  const auto summary_path = c.out / "summaries.csv";
  write_csv(summary_path, table, prov);
  files.insert(files.begin(), summary_path);
  if (run.family) {
    const auto path = c.out / "parameter.csv";
    write_csv(path, params, prov);
    files.push_back(path);
  }
  if (c.model == "epidemic" && c.forecast_horizon > 0.0) {
    const EpidemicForecast f = epidemic_predict(run.set, epidemic(c.g, c.q), c.forecast_horizon,
                                                c.dt, c.n_steps, c.forecast_sims, c.seed);
    Table ft;
    ft.header = {"peak_time", "total_deaths", "future_deaths"};
    for (std::size_t i = 0; i < f.peak_times.size(); ++i) {
      ft.rows.push_back({f.peak_times[i], f.total_deaths[i], f.future_deaths[i]});
    }
    const auto path = c.out / "forecast.csv";
    write_csv(path, ft, prov);
    files.push_back(path);
  }
  return files;
}

std::vector<std::filesystem::path> cmd_kl(const ExperimentConfig& config, std::ostream& report) {
  const ExperimentConfig c = with_model_defaults(config);
  c.validate();
  ensure_dir(c.out);
  const TimeGrid grid = TimeGrid::make(0.0, c.kl_horizon, c.kl_steps);
  const bool linear = c.kl_drift == "linear";
  const double rate = c.rate;
  const double a = c.kl_a;
  const double b = c.kl_b;
  const DriftFn f = linear ? DriftFn([rate](const Vector& x, double) { return (-rate * x).eval(); })
                           : DriftFn([a](const Vector&, double) { return scalar_vec(a); });
  const DriftFn f_l = linear ? DriftFn([](const Vector&, double) { return scalar_vec(0.0); })
                             : DriftFn([b](const Vector&, double) { return scalar_vec(b); });
  const Matrix sigma = scalar(c.q);
  const SdeModel q_law{1, 1, f, TimeMatrix::constant(scalar(1.0)), DiffusionSpec::constant(sigma),
                       {}, {}};

  std::vector<std::vector<Vector>> paths(c.kl_paths);
  parallel_for(paths.size(), c.threads, [&](std::size_t i) {
    Rng rng = make_stream(c.seed, StreamPurpose::kSimulate, 0, i);
    const BrownianIncrements incs = sample_brownian_increments(grid, q_law.diffusion, rng);
    paths[i] = integrate_sde(q_law, scalar_vec(c.kl_x0), grid, incs);
  });
  const double estimate = estimate_kl(f, f_l, sigma, paths, grid);
  std::vector<double> per_path(paths.size());
  parallel_for(paths.size(), c.threads, [&](std::size_t i) {
    per_path[i] = estimate_kl(f, f_l, sigma, {paths[i]}, grid);
  });
  double ss = 0.0;
  for (double v : per_path) ss += (v - estimate) * (v - estimate);
  const double n = static_cast<double>(per_path.size());
  const double se = std::sqrt(ss / (n - 1.0) / n);
  const double analytic =
      linear ? std::nan("") : 0.5 * (a - b) * (a - b) * c.kl_horizon / c.q;

  Table t;
  t.header = {"estimate", "std_error", "analytic"};
  t.rows.push_back({estimate, se, analytic});
  const auto path = c.out / "kl.csv";
  write_csv(path, t, provenance(c));
  report << "kl estimate=" << format_number(estimate) << " se=" << format_number(se);
  if (!linear) report << " analytic=" << format_number(analytic);
  report << '\n';
  return {path};
}

}  // namespace cdpf::harness
