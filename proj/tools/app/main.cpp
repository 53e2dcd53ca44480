#include <cdpf/errors.hpp>
#include <cdpf/harness/config.hpp>
#include <cdpf/harness/experiments.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> particles;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "INI configuration file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--particles", o.particles, "number of particles");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--threads", o.threads, "worker threads");
}

cdpf::harness::ExperimentConfig resolve(const Overrides& o) {
  cdpf::harness::ExperimentConfig c;
  if (!o.config.empty()) c = cdpf::harness::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.particles) c.particles = *o.particles;
  if (o.out) c.out = *o.out;
  if (o.threads) c.threads = *o.threads;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-discrete particle filters for SDE models"};
  app.require_subcommand(1);
  Overrides o;
  auto* simulate = app.add_subcommand("simulate", "simulate truth and measurements");
  auto* filter = app.add_subcommand("filter", "run a particle filter on measurements");
  auto* kl = app.add_subcommand("kl", "estimate the KL divergence between two drifts");
  auto* selftest = app.add_subcommand("selftest", "run the built-in oracle checks");
  for (auto* cmd : {simulate, filter, kl}) add_common(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (selftest->parsed()) {
      return cdpf::harness::cmd_selftest(std::cout) == 0 ? kExitOk : kExitNumerical;
    }
    const auto config = resolve(o);
    std::vector<std::filesystem::path> files;
    if (simulate->parsed()) {
      files = cdpf::harness::cmd_simulate(config);
      std::cout << "seed " << config.seed << '\n';
    } else if (filter->parsed()) {
      files = cdpf::harness::cmd_filter(config);
    } else {
      files = cdpf::harness::cmd_kl(config, std::cout);
    }
    for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
    return kExitOk;
  } catch (const cdpf::harness::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cdpf::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cdpf::harness::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const cdpf::DegeneracyError& e) {
    std::cerr << "error: " << e.what()
              << "\nhint: increase --particles, use the ekf importance process or lower "
                 "filter.ess_threshold\n";
    return kExitNumerical;
  } catch (const cdpf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
}
