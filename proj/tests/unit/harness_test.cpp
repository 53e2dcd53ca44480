#include <cdpf/harness/config.hpp>
#include <cdpf/harness/csv.hpp>
#include <cdpf/harness/experiments.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace cdpf::harness;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cdpf_harness_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDPF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Csv, FormatNumberRoundTripsExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(-3.0), "-3");
}

TEST(Csv, WriteReadRoundTrip) {
  const fs::path dir = scratch("csv");
  const Table t{{"a", "b"}, {{0.1, 1.0 / 3.0}, {-2e-300, 7e12}}};
  write_csv(dir / "x.csv", t, {{"seed", "4"}});
  const std::string text = slurp(dir / "x.csv");
  EXPECT_EQ(text.rfind("# seed=4\na,b\n", 0), 0u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  const Table back = read_csv(dir / "x.csv");
  EXPECT_EQ(back.header, t.header);
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(back.rows[r][c], t.rows[r][c]);
  }
}

TEST(Csv, ReadErrors) {
  const fs::path dir = scratch("csv_err");
  spit(dir / "bad.csv", "a,b\n1,x\n");
  EXPECT_THROW(read_csv(dir / "bad.csv"), IoError);
  spit(dir / "short.csv", "a,b\n1\n");
  EXPECT_THROW(read_csv(dir / "short.csv"), IoError);
  spit(dir / "empty.csv", "# only a comment\n");
  EXPECT_THROW(read_csv(dir / "empty.csv"), IoError);
  EXPECT_THROW(read_csv(dir / "missing.csv"), IoError);
}

TEST(Config, ParsesSectionsAndLists) {
  const ExperimentConfig c = parse_config(
      "[model]\nname = ou\nrate = 2\nq = 0.5\n[simulate]\nx0 = 1.5\n"
      "[filter]\ntype = cd_sir\nparticles = 42\ndump_steps = 1, 3\n[run]\nseed = 9\n");
  EXPECT_EQ(c.model, "ou");
  EXPECT_EQ(c.rate, 2.0);
  EXPECT_EQ(c.particles, 42u);
  EXPECT_EQ(c.dump_steps, (std::vector<int>{1, 3}));
  EXPECT_EQ(c.x0, std::vector<double>{1.5});
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_THROW(parse_config("[model]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\na = one\n"), ConfigError);
  EXPECT_THROW(parse_config("[filter]\nparticles = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[filter]\ness_threshold = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[filter]\ness_threshold = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[filter]\nmeasurements = /nonexistent/m.csv\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nname = epidemic\n[filter]\ntype = cd_sir\n"), ConfigError);
  EXPECT_THROW(parse_config("[simulate]\nx0 = 1, 2, 3\n"), ConfigError);
  try {
    parse_config("[filter]\nparticles = 0\n");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("filter.particles"), std::string::npos);
  }
  EXPECT_THROW(load_config("/nonexistent/config.ini"), IoError);
}

TEST(Config, ProvenanceListsEveryResultSetting) {
  const auto p = provenance(with_model_defaults(ExperimentConfig{}));
  bool seed = false, threads = false;
  for (const auto& [k, v] : p) {
    seed |= k == "run.seed";
    threads |= k == "run.threads";
  }
  EXPECT_TRUE(seed);
  EXPECT_FALSE(threads);
}

TEST(Simulate, PendulumRowsAndRoundTrip) {
  ExperimentConfig c;
  c.out = scratch("sim");
  c.seed = 5;
  c.n_meas = 100;
  const auto files = cmd_simulate(c);
  ASSERT_EQ(files.size(), 2u);
  const auto ms = read_measurements(c.out / "measurements.csv", "pendulum");
  ASSERT_EQ(ms.size(), 100u);
  const auto cfg = with_model_defaults(c);
  const auto data = cdpf::pendulum_simulate({cfg.a, cfg.q}, Eigen::Map<const cdpf::Vector>(cfg.x0.data(), 2),
                                            cfg.dt, cfg.n_meas, cfg.sigma2, cfg.fine_steps, cfg.seed);
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_NEAR(ms[k].time, data.measurements[k].time, 1e-12);
    EXPECT_NEAR(ms[k].value(0), data.measurements[k].value(0), 1e-12);
  }
  const Table truth = read_csv(c.out / "truth.csv");
  EXPECT_EQ(truth.rows.size(), 101u);

  const std::string first = slurp(c.out / "measurements.csv");
  cmd_simulate(c);
  EXPECT_EQ(slurp(c.out / "measurements.csv"), first);
}

TEST(Simulate, EpidemicWritesWeekDeaths) {
  ExperimentConfig c;
  c.model = "epidemic";
  c.q = 0.001;
  c.n_meas = 12;
  c.dt = 1.0;
  c.out = scratch("sim_epi");
  cmd_simulate(c);
  const auto ms = read_measurements(c.out / "measurements.csv", "epidemic");
  ASSERT_EQ(ms.size(), 12u);
  EXPECT_EQ(ms[0].time, 1.0);
  for (const auto& m : ms) EXPECT_GE(m.value(0), 0.0);
}

TEST(Filter, EmptyMeasurementsGiveHeaderOnly) {
  ExperimentConfig c;
  c.out = scratch("empty");
  spit(c.out / "m.csv", "t,y\n");
  c.measurements = c.out / "m.csv";
  c.particles = 10;
  cmd_filter(c);
  const Table s = read_csv(c.out / "summaries.csv");
  EXPECT_TRUE(s.rows.empty());
  EXPECT_EQ(s.header.front(), "k");
}

TEST(Filter, PendulumParameterColumnsFinite) {
  ExperimentConfig c;
  c.out = scratch("filter");
  c.n_meas = 15;
  c.particles = 200;
  cmd_simulate(c);
  cmd_filter(c);
  const Table s = read_csv(c.out / "summaries.csv");
  EXPECT_EQ(s.rows.size(), 15u);
  const Table p = read_csv(c.out / "parameter.csv");
  ASSERT_EQ(p.rows.size(), 15u);
  for (const auto& row : p.rows) {
    for (double v : row) EXPECT_TRUE(std::isfinite(v));
    EXPECT_LE(row[3], row[4]);
    EXPECT_LE(row[4], row[5]);
  }
  for (const auto& row : s.rows) {
    const double ess = row[s.header.size() - 3];
    EXPECT_GE(ess, 1.0 - 1e-9);
    EXPECT_LE(ess, 200.0 + 1e-9);
  }
}

TEST(Kl, ConstantDriftExact) {
  ExperimentConfig c;
  c.out = scratch("kl");
  c.kl_drift = "constant";
  c.kl_a = 1.0;
  c.kl_b = 0.0;
  c.kl_horizon = 2.0;
  c.q = 0.5;
  c.kl_paths = 10;
  std::ostringstream report;
  cmd_kl(c, report);
  const Table t = read_csv(c.out / "kl.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_NEAR(t.rows[0][0], 0.5 * 2.0 / 0.5, 1e-12);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(run_cli("selftest"), 0);
  EXPECT_EQ(run_cli("simulate --out " + dir.string() + " --seed 3"), 0);
  spit(dir / "bad.ini", "[filter]\nparticles = 0\n");
  EXPECT_EQ(run_cli("simulate --config " + (dir / "bad.ini").string()), 2);
  EXPECT_EQ(run_cli("simulate --bogus-flag"), 2);
  EXPECT_EQ(run_cli("filter --config " + (dir / "missing.ini").string()), 4);
  spit(dir / "blocker", "x");
  EXPECT_EQ(run_cli("simulate --out " + (dir / "blocker" / "sub").string()), 4);
  // An infinite observation leaves no particle with positive weight.
  spit(dir / "inf.csv", "t,y\n0.1,inf\n");
  spit(dir / "ou.ini", "[model]\nname = ou\n[filter]\ntype = cd_sir\nmeasurements = inf.csv\n");
  EXPECT_EQ(run_cli("filter --config " + (dir / "ou.ini").string() + " --out " + dir.string()), 3);
}
