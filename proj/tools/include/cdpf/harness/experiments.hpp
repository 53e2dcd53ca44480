#pragma once

#include "cdpf/harness/config.hpp"

#include <cdpf/models.hpp>
#include <cdpf/particle_filter.hpp>
#include <cdpf/rao_blackwell.hpp>
#include <cdpf/sde_core.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cdpf::harness {

// Reference models used for oracle comparisons.

/// dx = -rate x dt + dbeta, Q = q.
SdeModel ou_model(double rate, double q, StateSampler initial = {});

/// dx1/dt = x2, dx2 = -rate x2 dt + dbeta, Q = q.
SplitSdeModel iou_model(double rate, double q, StateSampler initial = {});

/// Conditionally Gaussian test model with state (x1, x2, x3):
///   dx1 = (-x1 + x3) dt,  dx2/dt = x3,  dx3 = -x3 dt + dbeta (Q = q),  y = x1 + r.
/// x1 is the marginalized linear block with initial law N(x1_mean, x1_var).
CondGaussModel cgauss_model(double q, double sigma2, double x1_mean, double x1_var,
                            StateSampler z_initial = {});

/// The same model with x1 sampled: [x1, x2] deterministic, x3 stochastic.
SplitSdeModel cgauss_augmented(double q, StateSampler initial = {});

/// log N(y | x1, sigma2).
MeasurementModel first_component_measurement(double sigma2);

struct SimulatedData {
  std::vector<double> times;
  std::vector<Vector> truth;
  std::vector<Measurement> measurements;
};

/// Truth on a fine grid plus y_k = x1(t_k) + N(0, sigma2).
SimulatedData simulate_gaussian(const SdeModel& model, const Vector& x0, double dt_meas,
                                int n_meas, int fine_steps, double sigma2, std::uint64_t seed);
SimulatedData simulate_gaussian(const SplitSdeModel& model, const Vector& x0, double dt_meas,
                                int n_meas, int fine_steps, double sigma2, std::uint64_t seed);

// Commands. Each writes CSV files into config.out and returns their paths.

std::vector<std::filesystem::path> cmd_simulate(const ExperimentConfig& config);
std::vector<std::filesystem::path> cmd_filter(const ExperimentConfig& config);
std::vector<std::filesystem::path> cmd_kl(const ExperimentConfig& config, std::ostream& report);

/// Small oracle suite; prints one PASS/FAIL line per check and returns the
/// number of failures.
int cmd_selftest(std::ostream& out);

/// Reads measurements for `model`: `t,y` for Gaussian models, `week,deaths`
/// for the epidemic model.
std::vector<Measurement> read_measurements(const std::filesystem::path& path,
                                           const std::string& model);

}  // namespace cdpf::harness
