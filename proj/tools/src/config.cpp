#include "cdpf/harness/config.hpp"

#include "cdpf/harness/csv.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace cdpf::harness {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_scalar(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("config: " + key + ": cannot parse '" + raw + "'");
  }
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_scalar<T>(key, item));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_number(v[i]);
  }
  return s;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::filesystem::path base) : tree_(tree), base_(std::move(base)) {}

  template <class T>
  void scalar(const std::string& key, T& field) {
    if (auto v = get(key)) field = parse_scalar<T>(key, *v);
  }
  void text(const std::string& key, std::string& field) {
    if (auto v = get(key)) field = trim(*v);
  }
  void path(const std::string& key, std::filesystem::path& field) {
    if (auto v = get(key)) {
      std::filesystem::path p(trim(*v));
      field = p.is_absolute() || base_.empty() ? p : base_ / p;
    }
  }
  template <class T>
  void list(const std::string& key, std::vector<T>& field) {
    if (auto v = get(key)) field = parse_list<T>(key, *v);
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!seen_.count(full)) throw ConfigError("config: unknown key " + full);
      }
    }
  }

 private:
  std::optional<std::string> get(const std::string& key) {
    seen_.insert(key);
    if (auto v = tree_.get_optional<std::string>(key)) return *v;
    return std::nullopt;
  }

  const pt::ptree& tree_;
  std::filesystem::path base_;
  std::set<std::string> seen_;
};

void fill(Reader& r, ExperimentConfig& c) {
  r.text("model.name", c.model);
  r.scalar("model.a", c.a);
  r.scalar("model.q", c.q);
  r.scalar("model.g", c.g);
  r.scalar("model.rate", c.rate);
  r.scalar("model.sigma2", c.sigma2);

  r.scalar("simulate.n_meas", c.n_meas);
  r.scalar("simulate.dt", c.dt);
  r.scalar("simulate.fine_steps", c.fine_steps);
  r.list("simulate.x0", c.x0);
  r.scalar("simulate.population", c.population);
  r.scalar("simulate.sigma_true", c.sigma_true);
  r.scalar("simulate.q_true", c.q_true);

  r.text("filter.type", c.filter);
  r.text("filter.importance", c.importance);
  r.scalar("filter.particles", c.particles);
  r.scalar("filter.n_steps", c.n_steps);
  r.scalar("filter.ess_threshold", c.ess_threshold);
  r.scalar("filter.prior_nu", c.prior_nu);
  r.scalar("filter.prior_s2", c.prior_s2);
  r.scalar("filter.prior_alpha", c.prior_alpha);
  r.scalar("filter.prior_beta", c.prior_beta);
  r.list("filter.prior_mean", c.prior_mean);
  r.list("filter.prior_var", c.prior_var);
  r.path("filter.measurements", c.measurements);
  r.list("filter.dump_steps", c.dump_steps);
  r.scalar("filter.forecast_horizon", c.forecast_horizon);
  r.scalar("filter.forecast_sims", c.forecast_sims);

  r.text("kl.drift", c.kl_drift);
  r.scalar("kl.a", c.kl_a);
  r.scalar("kl.b", c.kl_b);
  r.scalar("kl.horizon", c.kl_horizon);
  r.scalar("kl.x0", c.kl_x0);
  r.scalar("kl.paths", c.kl_paths);
  r.scalar("kl.steps", c.kl_steps);

  r.scalar("run.seed", c.seed);
  r.scalar("run.threads", c.threads);
  r.path("run.out", c.out);
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

std::size_t state_dim(const std::string& model) {
  if (model == "pendulum" || model == "iou") return 2;
  if (model == "epidemic" || model == "cgauss") return 3;
  return 1;
}

}  // namespace

void ExperimentConfig::validate() const {
  static const std::set<std::string> models{"pendulum", "epidemic", "ou", "iou", "cgauss"};
  static const std::set<std::string> filters{"cd_sir", "cd_sir_singular", "cdrb_gauss",
                                             "cdrb_param"};
  check(models.count(model) == 1, "model.name: unknown model '" + model + "'");
  check(filters.count(filter) == 1, "filter.type: unknown filter '" + filter + "'");
  check(importance == "ekf" || importance == "prior",
        "filter.importance: must be ekf or prior");
  check(finite_positive(a), "model.a: must be positive");
  check(finite_positive(q), "model.q: must be positive");
  check(finite_positive(g), "model.g: must be positive");
  check(std::isfinite(rate), "model.rate: must be finite");
  check(finite_positive(sigma2), "model.sigma2: must be positive");
  check(n_meas >= 0, "simulate.n_meas: must be nonnegative");
  check(finite_positive(dt), "simulate.dt: must be positive");
  check(fine_steps >= 1, "simulate.fine_steps: must be at least 1");
  check(finite_positive(population), "simulate.population: must be positive");
  check(finite_positive(sigma_true), "simulate.sigma_true: must be positive");
  check(std::isfinite(q_true) && q_true >= 0.0, "simulate.q_true: must be nonnegative");
  check(particles >= 1, "filter.particles: must be at least 1");
  check(n_steps >= 1, "filter.n_steps: must be at least 1");
  check(ess_threshold > 0.0 && ess_threshold <= 1.0, "filter.ess_threshold: must be in (0, 1]");
  check(finite_positive(prior_nu) && finite_positive(prior_s2),
        "filter.prior_nu/prior_s2: must be positive");
  check(finite_positive(prior_alpha) && finite_positive(prior_beta),
        "filter.prior_alpha/prior_beta: must be positive");
  const std::size_t n = state_dim(model);
  check(x0.empty() || x0.size() == n, "simulate.x0: expected " + std::to_string(n) + " values");
  check(prior_mean.empty() || prior_mean.size() == n,
        "filter.prior_mean: expected " + std::to_string(n) + " values");
  check(prior_var.empty() || prior_var.size() == n,
        "filter.prior_var: expected " + std::to_string(n) + " values");
  for (double v : prior_var) check(std::isfinite(v) && v >= 0.0, "filter.prior_var: negative");
  check(measurements.empty() || std::filesystem::exists(measurements),
        "filter.measurements: file not found: " + measurements.string());
  check(forecast_horizon >= 0.0, "filter.forecast_horizon: must be nonnegative");
  check(forecast_sims >= 1, "filter.forecast_sims: must be at least 1");
  check(kl_drift == "linear" || kl_drift == "constant", "kl.drift: must be linear or constant");
  check(finite_positive(kl_horizon), "kl.horizon: must be positive");
  check(kl_paths >= 2, "kl.paths: must be at least 2");
  check(kl_steps >= 1, "kl.steps: must be at least 1");
  check(threads >= 1, "run.threads: must be at least 1");

  if (filter == "cd_sir") check(model == "ou", "filter.type: cd_sir supports model ou");
  if (filter == "cd_sir_singular") {
    check(model == "pendulum" || model == "iou",
          "filter.type: cd_sir_singular supports pendulum and iou");
  }
  if (filter == "cdrb_gauss") check(model == "cgauss", "filter.type: cdrb_gauss needs cgauss");
  if (filter == "cdrb_param") {
    check(model == "pendulum" || model == "epidemic",
          "filter.type: cdrb_param supports pendulum and epidemic");
  }
  if (model == "epidemic") check(filter == "cdrb_param", "model.name: epidemic needs cdrb_param");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " at line " +
                      std::to_string(e.line()));
  }
  ExperimentConfig c;
  Reader r(tree, base);
  fill(r, c);
  r.reject_unknown();
  with_model_defaults(c).validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

ExperimentConfig with_model_defaults(ExperimentConfig c) {
  const auto fill_if_empty = [](std::vector<double>& v, std::vector<double> d) {
    if (v.empty()) v = std::move(d);
  };
  if (c.model == "pendulum") {
    fill_if_empty(c.x0, {1.5, 0.0});
    fill_if_empty(c.prior_mean, c.x0);
    fill_if_empty(c.prior_var, {0.1, 0.1});
  } else if (c.model == "ou") {
    fill_if_empty(c.x0, {1.0});
    fill_if_empty(c.prior_mean, {1.0});
    fill_if_empty(c.prior_var, {0.5});
  } else if (c.model == "iou") {
    fill_if_empty(c.x0, {0.0, 1.0});
    fill_if_empty(c.prior_mean, {0.0, 1.0});
    fill_if_empty(c.prior_var, {0.5, 0.5});
  } else if (c.model == "cgauss") {
    fill_if_empty(c.x0, {0.0, 0.0, 0.5});
    fill_if_empty(c.prior_mean, {0.0, 0.0, 0.5});
    fill_if_empty(c.prior_var, {0.5, 0.0, 0.5});
  } else if (c.model == "epidemic") {
    fill_if_empty(c.x0, {0.99, 0.01, std::log(c.sigma_true)});
  }
  return c;
}

std::vector<std::pair<std::string, std::string>> provenance(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> p{
      {"model.name", c.model},
      {"model.a", format_number(c.a)},
      {"model.q", format_number(c.q)},
      {"model.g", format_number(c.g)},
      {"model.rate", format_number(c.rate)},
      {"model.sigma2", format_number(c.sigma2)},
      {"simulate.n_meas", std::to_string(c.n_meas)},
      {"simulate.dt", format_number(c.dt)},
      {"simulate.fine_steps", std::to_string(c.fine_steps)},
      {"simulate.x0", join(c.x0)},
      {"simulate.population", format_number(c.population)},
      {"simulate.sigma_true", format_number(c.sigma_true)},
      {"simulate.q_true", format_number(c.q_true)},
      {"filter.type", c.filter},
      {"filter.importance", c.importance},
      {"filter.particles", std::to_string(c.particles)},
      {"filter.n_steps", std::to_string(c.n_steps)},
      {"filter.ess_threshold", format_number(c.ess_threshold)},
      {"filter.prior_nu", format_number(c.prior_nu)},
      {"filter.prior_s2", format_number(c.prior_s2)},
      {"filter.prior_alpha", format_number(c.prior_alpha)},
      {"filter.prior_beta", format_number(c.prior_beta)},
      {"filter.prior_mean", join(c.prior_mean)},
      {"filter.prior_var", join(c.prior_var)},
      {"filter.measurements", c.measurements.filename().string()},
      {"filter.dump_steps", join(c.dump_steps)},
      {"filter.forecast_horizon", format_number(c.forecast_horizon)},
      {"filter.forecast_sims", std::to_string(c.forecast_sims)},
      {"kl.drift", c.kl_drift},
      {"kl.a", format_number(c.kl_a)},
      {"kl.b", format_number(c.kl_b)},
      {"kl.horizon", format_number(c.kl_horizon)},
      {"kl.x0", format_number(c.kl_x0)},
      {"kl.paths", std::to_string(c.kl_paths)},
      {"kl.steps", std::to_string(c.kl_steps)},
      {"run.seed", std::to_string(c.seed)},
  };
  return p;
}

}  // namespace cdpf::harness
