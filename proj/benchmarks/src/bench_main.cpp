#include <cdpf/girsanov.hpp>
#include <cdpf/models.hpp>
#include <cdpf/particle_filter.hpp>
#include <cdpf/random.hpp>

#include <benchmark/benchmark.h>

using namespace cdpf;

namespace {

Vector pair(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// One Euler path of the scalar likelihood-ratio recursion.
void BM_PropagateCoupledScalar(benchmark::State& state) {
  SdeModel m;
  m.dim_state = 1;
  m.dim_noise = 1;
  m.drift = [](const Vector& x, double) { return x.array().sin().matrix().eval(); };
  m.dispersion = TimeMatrix::constant(Matrix::Identity(1, 1));
  m.diffusion = DiffusionSpec::constant(Matrix::Identity(1, 1));
  const ImportanceSpec imp{[](const Vector&, double) { return Vector::Zero(1).eval(); },
                           TimeMatrix::constant(Matrix::Identity(1, 1))};
  const TimeGrid g = TimeGrid::make(0.0, 1.0, static_cast<int>(state.range(0)));
  Rng rng(1);
  const BrownianIncrements incs = sample_brownian_increments(g, m.diffusion, rng);
  const Vector x0 = Vector::Zero(1);
  for (auto _ : state) benchmark::DoNotOptimize(propagate_coupled(m, imp, x0, g, incs).llr.value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PropagateCoupledScalar)->Arg(10)->Arg(100);

// Bootstrap CD-SIR step on the pendulum, particle count from the argument.
void BM_PendulumSirStep(benchmark::State& state) {
  const PendulumParams p = pendulum(1.0, 0.01);
  const SplitSdeModel m = pendulum_model(p, gaussian_sampler(pair(1.5, 0.0), pair(0.1, 0.1)));
  const ImportanceBuilder b = prior_importance(m);
  const MeasurementModel meas = pendulum_measurement(0.25);
  ParticleSet set = ParticleSet::initialize(static_cast<std::size_t>(state.range(0)), m.initial_sampler, 2, 0.0);
  FilterOptions opt;
  Measurement y{0.1, Vector::Constant(1, 1.4)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(cd_sir_singular_step(set, m, b, meas, y, opt).ess);
    y.time += 0.1;
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PendulumSirStep)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
