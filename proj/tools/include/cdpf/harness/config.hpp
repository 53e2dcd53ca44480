#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdpf::harness {

/// Invalid or missing configuration value; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// I/O failure (unreadable input, unwritable output).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // [model]
  std::string model = "pendulum";  // pendulum | epidemic | ou | iou | cgauss
  double a = 1.0;                  // pendulum angular frequency
  double q = 0.01;                 // process noise spectral density
  double g = 1.0;                  // epidemic recovery rate
  double rate = 1.0;               // OU mean-reversion rate
  double sigma2 = 0.25;            // measurement variance (Gaussian models)

  // [simulate]
  int n_meas = 100;
  double dt = 0.1;
  int fine_steps = 100;
  std::vector<double> x0;          // truth initial state, model default when empty
  double population = 1e5;         // epidemic N
  double sigma_true = 1.6;         // epidemic contact number of the truth
  double q_true = 0.0;             // epidemic truth diffusion of lambda

  // [filter]
  std::string filter = "cdrb_param";  // cd_sir | cd_sir_singular | cdrb_gauss | cdrb_param
  std::string importance = "ekf";     // ekf | prior
  std::size_t particles = 1000;
  int n_steps = 10;
  double ess_threshold = 0.5;
  double prior_nu = 2.0;
  double prior_s2 = 0.2;
  double prior_alpha = 10.0;
  double prior_beta = 0.001;
  std::vector<double> prior_mean;  // Gaussian initial law, model default when empty
  std::vector<double> prior_var;
  std::filesystem::path measurements;
  std::vector<int> dump_steps;
  double forecast_horizon = 0.0;   // epidemic: 0 disables the forecast
  std::size_t forecast_sims = 1000;

  // [kl]
  std::string kl_drift = "linear";  // linear (f = -rate x vs 0) | constant (a vs b)
  double kl_a = 1.0;
  double kl_b = 0.0;
  double kl_horizon = 1.0;
  double kl_x0 = 1.0;
  std::size_t kl_paths = 10000;
  int kl_steps = 100;

  // [run]
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out = ".";

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

/// Reads an INI file. Unknown keys are rejected. Relative paths are resolved
/// against the file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Parses INI text (paths relative to `base`).
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base = {});

/// Model-dependent defaults for x0, prior_mean and prior_var when unset.
ExperimentConfig with_model_defaults(ExperimentConfig config);

/// Every setting that affects results, as key/value pairs for output headers.
/// Thread count and output directory are left out on purpose.
std::vector<std::pair<std::string, std::string>> provenance(const ExperimentConfig& config);

}  // namespace cdpf::harness
