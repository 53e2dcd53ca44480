#include "cdpf/particle_filter.hpp"

#include "cdpf/errors.hpp"
#include "cdpf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cdpf {

ParticleSet::ParticleSet(std::vector<Particle> particles, std::uint64_t master_seed, double time)
    : particles_(std::move(particles)), master_seed_(master_seed), time_(time) {
  if (particles_.empty()) throw InvalidArgument("ParticleSet needs at least one particle");
}

ParticleSet ParticleSet::initialize(std::size_t n, const StateSampler& sampler,
                                    std::uint64_t master_seed, double t0) {
  if (n < 1) throw InvalidArgument("ParticleSet::initialize: N must be >= 1");
  if (!sampler) throw InvalidArgument("ParticleSet::initialize: missing initial sampler");
  std::vector<Particle> particles(n);
  const double log_w = -std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_stream(master_seed, StreamPurpose::kInitial, 0, i);
    particles[i].state = sampler(rng);
    particles[i].log_weight = log_w;
  }
  return ParticleSet(std::move(particles), master_seed, t0);
}

std::vector<double> ParticleSet::weights() const {
  std::vector<double> lw(particles_.size());
  std::transform(particles_.begin(), particles_.end(), lw.begin(),
                 [](const Particle& p) { return p.log_weight; });
  return normalize_log_weights(lw).weights;
}

Rng ParticleSet::stream(StreamPurpose purpose, std::uint64_t index) const {
  return make_stream(master_seed_, purpose, static_cast<std::uint64_t>(step_), index);
}

NormalizedWeights normalize_log_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) throw InvalidArgument("normalize_log_weights: empty input");
  double max_lw = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
      throw IntegrationError("normalize_log_weights: NaN or +inf log-weight");
    }
    max_lw = std::max(max_lw, lw);
  }
  if (max_lw == -std::numeric_limits<double>::infinity()) {
    throw DegeneracyError("all particle weights are zero", -1);
  }
  NormalizedWeights out;
  out.weights.resize(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    out.weights[i] = std::exp(log_weights[i] - max_lw);
    total += out.weights[i];
  }
  for (double& w : out.weights) w /= total;
  out.log_mean = max_lw + std::log(total / static_cast<double>(log_weights.size()));
  return out;
}

double effective_sample_size(std::span<const double> weights) {
  if (weights.empty()) throw InvalidArgument("effective_sample_size: empty input");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("effective_sample_size: negative or NaN weight");
    sum += w;
    sum_sq += w * w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidArgument("effective_sample_size: weights are not normalized");
  }
  const double n = static_cast<double>(weights.size());
  return std::clamp(1.0 / sum_sq, 1.0, n);
}

std::vector<std::size_t> systematic_resample_indices(std::span<const double> weights, double u) {
  const std::size_t n = weights.size();
  if (n == 0) throw InvalidArgument("systematic_resample: empty weights");
  if (!(u >= 0.0 && u < 1.0)) throw InvalidArgument("systematic_resample: u must be in [0, 1)");
  std::vector<std::size_t> idx(n);
  const double step = 1.0 / static_cast<double>(n);
  double cumulative = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double point = (static_cast<double>(i) + u) * step;
    while (point >= cumulative && j + 1 < n) {
      ++j;
      cumulative += weights[j];
    }
    idx[i] = j;
  }
  return idx;
}

void systematic_resample(ParticleSet& set, Rng& rng) {
  const std::vector<double> w = set.weights();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double u = uniform(rng);
  if (u >= 1.0) u = 0.0;
  const auto idx = systematic_resample_indices(w, u);
  const auto& old = set.particles();
  std::vector<Particle> next;
  next.reserve(idx.size());
  const double log_w = -std::log(static_cast<double>(idx.size()));
  for (std::size_t i : idx) {
    next.push_back(old[i]);
    next.back().log_weight = log_w;
  }
  set.particles() = std::move(next);
}

StepReport sir_step(ParticleSet& set, double t_k, const ParticleUpdate& update,
                    const FilterOptions& options) {
  if (!(t_k > set.time())) {
    std::ostringstream os;
    os << "measurement time " << t_k << " is not after the current time " << set.time();
    throw InvalidArgument(os.str());
  }
  if (!(options.ess_threshold > 0.0 && options.ess_threshold <= 1.0)) {
    throw InvalidArgument("ESS threshold must be in (0, 1]");
  }
  const int k = set.step() + 1;
  const std::size_t n = set.size();
  auto& particles = set.particles();
  StepReport report;
  report.step = k;
  report.time = t_k;
  report.log_likelihood_ratios.assign(n, 0.0);

  parallel_for(n, options.threads, [&](std::size_t i) {
    Rng rng = make_stream(set.master_seed(), StreamPurpose::kPropagate,
                          static_cast<std::uint64_t>(k), i);
    double llr = 0.0;
    const double inc = update(particles[i], rng, llr);
    if (std::isnan(inc)) {
      std::ostringstream os;
      os << "incremental log-weight of particle " << i << " is NaN at step " << k;
      throw IntegrationError(os.str());
    }
    particles[i].log_weight += inc;
    report.log_likelihood_ratios[i] = llr;
  });

  std::vector<double> lw(n);
  for (std::size_t i = 0; i < n; ++i) lw[i] = particles[i].log_weight;
  NormalizedWeights nw;
  try {
    nw = normalize_log_weights(lw);
  } catch (const DegeneracyError&) {
    std::ostringstream os;
    os << "all particle weights vanished at step " << k << " (t=" << t_k
       << "); increase the particle count or use a better importance process";
    throw DegeneracyError(os.str(), k);
  }
  // Previous weights are normalized, so the log-sum of the new ones is the
  // log marginal-likelihood increment.
  report.log_marginal_increment = nw.log_mean + std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) particles[i].log_weight = std::log(nw.weights[i]);
  report.ess = effective_sample_size(nw.weights);

  set.advance(t_k);
  report.summary = summarize(set);
  report.summary.ess = report.ess;
  if (report.ess < options.ess_threshold * static_cast<double>(n)) {
    Rng rng = set.stream(StreamPurpose::kResample, 0);
    systematic_resample(set, rng);
    report.resampled = true;
  }
  return report;
}

ImportanceBuilder prior_importance(const SdeModel& model) {
  return [drift = model.drift, dispersion = model.dispersion](const Particle&, const Measurement&,
                                                              const TimeGrid&) {
    return ImportanceSpec{drift, dispersion};
  };
}

ImportanceBuilder prior_importance(const SplitSdeModel& model) {
  return [drift = model.stoch_drift, dispersion = model.dispersion](
             const Particle&, const Measurement&, const TimeGrid&) {
    return ImportanceSpec{drift, dispersion};
  };
}

namespace {

template <typename Model>
StepReport coupled_sir_step(ParticleSet& set, const Model& model, const ImportanceBuilder& builder,
                            const MeasurementModel& meas, const Measurement& y_k,
                            const FilterOptions& options) {
  const TimeGrid grid = TimeGrid::make(set.time(), y_k.time, options.n_steps);
  auto update = [&](Particle& p, Rng& rng, double& llr) {
    const ImportanceSpec imp = builder(p, y_k, grid);
    const BrownianIncrements incs = sample_brownian_increments(grid, model.diffusion, rng);
    CoupledPathState st = propagate_coupled(model, imp, p.state, grid, incs);
    p.state = std::move(st.s_star);
    llr = st.llr.value;
    return llr + meas.log_likelihood(y_k.value, p.state);
  };
  return sir_step(set, y_k.time, update, options);
}

}  // namespace

StepReport cd_sir_step(ParticleSet& set, const SdeModel& model, const ImportanceBuilder& builder,
                       const MeasurementModel& meas, const Measurement& y_k,
                       const FilterOptions& options) {
  return coupled_sir_step(set, model, builder, meas, y_k, options);
}

StepReport cd_sir_singular_step(ParticleSet& set, const SplitSdeModel& model,
                                const ImportanceBuilder& builder, const MeasurementModel& meas,
                                const Measurement& y_k, const FilterOptions& options) {
  return coupled_sir_step(set, model, builder, meas, y_k, options);
}

Summary summarize(const ParticleSet& set) {
  const std::vector<double> w = set.weights();
  const auto& ps = set.particles();
  const Eigen::Index nb = ps.front().block.dim();
  const Eigen::Index nx = ps.front().state.size();
  const Eigen::Index dim = nb + nx;
  Summary s;
  s.step = set.step();
  s.time = set.time();
  s.mean = Vector::Zero(dim);
  Matrix second = Matrix::Zero(dim, dim);
  Vector v(dim);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (nb > 0) v.head(nb) = ps[i].block.mean;
    v.tail(nx) = ps[i].state;
    s.mean += w[i] * v;
    second.noalias() += w[i] * v * v.transpose();
    if (nb > 0) second.topLeftCorner(nb, nb) += w[i] * ps[i].block.cov;
  }
  s.cov = symmetrized(second - s.mean * s.mean.transpose());
  s.ess = effective_sample_size(w);
  return s;
}

std::vector<Summary> run_filter(ParticleSet& set, const std::vector<Measurement>& measurements,
                                const StepFunction& step, const StepObserver& observer) {
  double previous = set.time();
  for (std::size_t k = 0; k < measurements.size(); ++k) {
    if (!(measurements[k].time > previous)) {
      std::ostringstream os;
      os << "measurement times must be strictly increasing (index " << k << ", t="
         << measurements[k].time << ")";
      throw InvalidArgument(os.str());
    }
    previous = measurements[k].time;
  }
  std::vector<Summary> out;
  out.reserve(measurements.size() + 1);
  out.push_back(summarize(set));
  if (observer) observer(set, out.back());
  double log_marginal = 0.0;
  for (const auto& y : measurements) {
    StepReport report;
    try {
      report = step(set, y);
    } catch (const DegeneracyError&) {
      throw;
    } catch (const Error& e) {
      std::ostringstream os;
      os << "step " << set.step() + 1 << ": " << e.what();
      if (dynamic_cast<const IntegrationError*>(&e)) throw IntegrationError(os.str());
      if (dynamic_cast<const MatrixInversionError*>(&e)) {
        throw MatrixInversionError(os.str(), static_cast<const MatrixInversionError&>(e).time());
      }
      throw;
    }
    log_marginal += report.log_marginal_increment;
    Summary s = std::move(report.summary);
    s.ess = report.ess;
    s.log_marginal = log_marginal;
    s.resampled = report.resampled;
    out.push_back(std::move(s));
    if (observer) observer(set, out.back());
  }
  return out;
}

}  // namespace cdpf
