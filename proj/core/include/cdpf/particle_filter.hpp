#pragma once

#include "cdpf/gaussian_block.hpp"
#include "cdpf/girsanov.hpp"
#include "cdpf/linalg.hpp"
#include "cdpf/random.hpp"
#include "cdpf/sde_core.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cdpf {

/// One weighted sample. `block` is used by the conditionally Gaussian filter,
/// `stats` by the static-parameter filter and `aux` by model-specific
/// bookkeeping that must follow the particle through resampling.
struct Particle {
  Vector state;
  double log_weight = 0.0;
  GaussianBlock block;
  Vector stats;
  Vector aux;
};

struct Measurement {
  double time = 0.0;
  Vector value;
};

/// log p(y | x); may return -infinity for impossible observations.
struct MeasurementModel {
  std::function<double(const Vector& y, const Vector& x)> log_likelihood;
};

/// N particles with normalized log-weights plus the master seed from which all
/// per-particle random streams are derived.
class ParticleSet {
 public:
  ParticleSet() = default;
  ParticleSet(std::vector<Particle> particles, std::uint64_t master_seed, double time);

  /// Draws N initial states (particle i uses its own derived stream) with
  /// equal weights 1/N.
  static ParticleSet initialize(std::size_t n, const StateSampler& sampler,
                                std::uint64_t master_seed, double t0);

  std::size_t size() const noexcept { return particles_.size(); }
  std::vector<Particle>& particles() noexcept { return particles_; }
  const std::vector<Particle>& particles() const noexcept { return particles_; }
  Particle& operator[](std::size_t i) { return particles_[i]; }
  const Particle& operator[](std::size_t i) const { return particles_[i]; }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  int step() const noexcept { return step_; }
  double time() const noexcept { return time_; }
  void advance(double t) {
    ++step_;
    time_ = t;
  }

  /// Normalized weights exp(log_weight).
  std::vector<double> weights() const;

  /// Random stream for (purpose, current step, index).
  Rng stream(StreamPurpose purpose, std::uint64_t index) const;

 private:
  std::vector<Particle> particles_;
  std::uint64_t master_seed_ = 0;
  int step_ = 0;
  double time_ = 0.0;
};

struct FilterOptions {
  /// Resample when ESS < ess_threshold * N.
  double ess_threshold = 0.5;
  /// Euler steps per inter-measurement interval.
  int n_steps = 10;
  int threads = 1;
};

/// Filter summary at one measurement time.
struct Summary {
  int step = 0;
  double time = 0.0;
  Vector mean;
  Matrix cov;
  double ess = 0.0;
  double log_marginal = 0.0;
  bool resampled = false;
};

struct StepReport {
  int step = 0;
  double time = 0.0;
  /// ESS after weighting, before any resampling.
  double ess = 0.0;
  double log_marginal_increment = 0.0;
  bool resampled = false;
  /// Lambda of every particle for this interval (slot order before resampling).
  std::vector<double> log_likelihood_ratios;
  /// Weighted summary taken after reweighting and before resampling.
  Summary summary;
};

struct NormalizedWeights {
  std::vector<double> weights;
  /// log of the mean of exp(log_weights).
  double log_mean = 0.0;
};

/// Softmax of log-weights. Throws DegeneracyError (step -1) when every entry is -inf.
NormalizedWeights normalize_log_weights(std::span<const double> log_weights);

/// 1 / sum w_i^2 for weights that sum to one (within 1e-9).
double effective_sample_size(std::span<const double> weights);

/// Systematic resampling with one uniform offset u in [0, 1): returns the
/// ancestor index of each of the N offspring.
std::vector<std::size_t> systematic_resample_indices(std::span<const double> weights, double u);

/// Resamples the set in place and resets all weights to 1/N.
void systematic_resample(ParticleSet& set, Rng& rng);

/// Propagates one particle in place over the interval and returns its log
/// incremental weight (Lambda plus the measurement term). `llr` receives Lambda.
using ParticleUpdate = std::function<double(Particle& particle, Rng& rng, double& llr)>;

/// Generic SIR step: parallel update of every particle with its own stream,
/// log-weight accumulation, normalization, ESS and optional systematic
/// resampling. Throws DegeneracyError naming the step if all weights vanish.
StepReport sir_step(ParticleSet& set, double t_k, const ParticleUpdate& update,
                    const FilterOptions& options);

/// Builds the importance process for one particle over the next interval.
using ImportanceBuilder =
    std::function<ImportanceSpec(const Particle& particle, const Measurement& y_k, const TimeGrid& grid)>;

/// Importance process equal to the prior dynamics (bootstrap filter).
ImportanceBuilder prior_importance(const SdeModel& model);
ImportanceBuilder prior_importance(const SplitSdeModel& model);

/// Continuous-discrete SIR for the non-singular class.
StepReport cd_sir_step(ParticleSet& set, const SdeModel& model, const ImportanceBuilder& builder,
                       const MeasurementModel& meas, const Measurement& y_k,
                       const FilterOptions& options);

/// Continuous-discrete SIR for the singular class [x1 deterministic; x2 stochastic].
StepReport cd_sir_singular_step(ParticleSet& set, const SplitSdeModel& model,
                                const ImportanceBuilder& builder, const MeasurementModel& meas,
                                const Measurement& y_k, const FilterOptions& options);

/// Weighted mean and covariance of the particle set. When particles carry a
/// Gaussian block the summarized vector is [block mean; state] and the
/// covariance is that of the Gaussian mixture.
Summary summarize(const ParticleSet& set);

using StepFunction = std::function<StepReport(ParticleSet& set, const Measurement& y_k)>;
using StepObserver = std::function<void(const ParticleSet& set, const Summary& summary)>;

/// Runs the step function over every measurement (times strictly increasing and
/// after the set time). Returns the initial summary followed by one summary per
/// measurement.
std::vector<Summary> run_filter(ParticleSet& set, const std::vector<Measurement>& measurements,
                                const StepFunction& step, const StepObserver& observer = {});

}  // namespace cdpf
