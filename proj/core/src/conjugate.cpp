#include "cdpf/conjugate.hpp"

#include "cdpf/errors.hpp"

#include <boost/math/tools/toms748_solve.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/inverse_chi_squared.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace cdpf {

namespace {

using FastPolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

}  // namespace
namespace {

void require_size(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << " must have " << n << " entries, got " << v.size();
    throw InvalidArgument(os.str());
  }
}

}  // namespace

InvChi2Family::InvChi2Family(double nu0, double scale0) : nu0_(nu0), scale0_(scale0) {
  if (!(nu0 > 0.0) || !(scale0 > 0.0) || !std::isfinite(nu0) || !std::isfinite(scale0)) {
    throw InvalidArgument("Inv-chi^2 prior needs nu0 > 0 and sigma0^2 > 0");
  }
}

Vector InvChi2Family::prior() const { return Vector{{nu0_, scale0_}}; }

void InvChi2Family::validate(const Vector& stats) const {
  require_size(stats, 2, "Inv-chi^2 statistic");
  if (!(stats(0) > 0.0) || !(stats(1) > 0.0) || !stats.allFinite()) {
    std::ostringstream os;
    os << "Inv-chi^2 statistic violates nu > 0, s^2 > 0: (" << stats(0) << ", " << stats(1) << ")";
    throw InvalidArgument(os.str());
  }
}

Vector InvChi2Family::update(const Vector& stats, const Vector& feature, const Vector& y) const {
  validate(stats);
  require_size(feature, 1, "Inv-chi^2 feature");
  require_size(y, 1, "Inv-chi^2 measurement");
  const double nu = stats(0);
  const double r = y(0) - feature(0);
  return Vector{{nu + 1.0, (nu * stats(1) + r * r) / (nu + 1.0)}};
}

double InvChi2Family::marginal_log_likelihood(const Vector& y, const Vector& feature,
                                              const Vector& stats) const {
  validate(stats);
  require_size(feature, 1, "Inv-chi^2 feature");
  require_size(y, 1, "Inv-chi^2 measurement");
  const double nu = stats(0);
  const double s2 = stats(1);
  const double r = y(0) - feature(0);
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi * s2) -
         0.5 * (nu + 1.0) * std::log1p(r * r / (nu * s2));
}

double InvChi2Family::posterior_mean(const Vector& stats) const {
  validate(stats);
  const double nu = stats(0);
  if (nu <= 2.0) return std::numeric_limits<double>::infinity();
  return nu * stats(1) / (nu - 2.0);
}

double InvChi2Family::posterior_cdf(const Vector& stats, double value) const {
  validate(stats);
  if (value <= 0.0) return 0.0;
  boost::math::inverse_chi_squared_distribution<double, FastPolicy> dist(stats(0), stats(1));
  return boost::math::cdf(dist, value);
}

GammaPoissonFamily::GammaPoissonFamily(double alpha0, double beta0)
    : alpha0_(alpha0), beta0_(beta0) {
  if (!(alpha0 > 0.0) || !(beta0 > 0.0) || !std::isfinite(alpha0) || !std::isfinite(beta0)) {
    throw InvalidArgument("Gamma prior needs alpha0 > 0 and beta0 > 0");
  }
}

Vector GammaPoissonFamily::prior() const { return Vector{{alpha0_, beta0_}}; }

void GammaPoissonFamily::validate(const Vector& stats) const {
  require_size(stats, 2, "Gamma statistic");
  if (!(stats(0) > 0.0) || !(stats(1) > 0.0) || !stats.allFinite()) {
    std::ostringstream os;
    os << "Gamma statistic violates alpha > 0, beta > 0: (" << stats(0) << ", " << stats(1) << ")";
    throw InvalidArgument(os.str());
  }
}

namespace {

void check_count(const Vector& y) {
  require_size(y, 1, "count measurement");
  const double d = y(0);
  if (!(d >= 0.0) || d != std::floor(d)) {
    throw InvalidArgument("count measurement must be a nonnegative integer");
  }
}

double check_theta(const Vector& feature) {
  require_size(feature, 1, "Gamma-Poisson feature");
  const double theta = feature(0);
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw InvalidArgument("Poisson rate factor theta must be positive");
  }
  return theta;
}

}  // namespace

Vector GammaPoissonFamily::update(const Vector& stats, const Vector& feature,
                                  const Vector& y) const {
  validate(stats);
  check_count(y);
  const double theta = check_theta(feature);
  return Vector{{stats(0) + y(0), stats(1) + theta}};
}

double GammaPoissonFamily::marginal_log_likelihood(const Vector& y, const Vector& feature,
                                                   const Vector& stats) const {
  validate(stats);
  check_count(y);
  const double theta = check_theta(feature);
  const double alpha = stats(0);
  const double beta = stats(1);
  const double d = y(0);
  const double log_total = std::log(beta + theta);
  double out = std::lgamma(alpha + d) - std::lgamma(alpha) - std::lgamma(d + 1.0) +
               alpha * (std::log(beta) - log_total);
  if (d > 0.0) out += d * (std::log(theta) - log_total);
  return out;
}

double GammaPoissonFamily::posterior_mean(const Vector& stats) const {
  validate(stats);
  return stats(0) / stats(1);
}

double GammaPoissonFamily::posterior_cdf(const Vector& stats, double value) const {
  validate(stats);
  if (value <= 0.0) return 0.0;
  boost::math::gamma_distribution<double, FastPolicy> dist(stats(0), 1.0 / stats(1));
  return boost::math::cdf(dist, value);
}

std::shared_ptr<const ConjugateFamily> invchi2_family(double nu0, double scale0) {
  return std::make_shared<InvChi2Family>(nu0, scale0);
}

std::shared_ptr<const ConjugateFamily> gamma_poisson_family(double alpha0, double beta0) {
  return std::make_shared<GammaPoissonFamily>(alpha0, beta0);
}

double mixture_quantile(const ConjugateFamily& family, std::span<const Vector> stats,
                        std::span<const double> weights, double probability) {
  if (stats.size() != weights.size() || stats.empty()) {
    throw InvalidArgument("mixture_quantile: stats and weights must be non-empty and aligned");
  }
  if (!(probability > 0.0 && probability < 1.0)) {
    throw InvalidArgument("mixture_quantile: probability must be in (0, 1)");
  }
  auto cdf = [&](double v) {
    double c = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      if (weights[i] > 0.0) c += weights[i] * family.posterior_cdf(stats[i], v);
    }
    return c;
  };
  // Geometric bracket [lo, 2 lo], then TOMS 748 on cdf - p.
  double lo = 1.0;
  if (cdf(lo) < probability) {
    for (int i = 0; i < 2000 && cdf(2.0 * lo) < probability; ++i) lo *= 2.0;
  } else {
    for (int i = 0; i < 2000 && lo > 0.0 && cdf(lo) >= probability; ++i) lo *= 0.5;
  }
  if (!(lo > 0.0)) return 0.0;
  const auto f = [&](double v) { return cdf(v) - probability; };
  double f_lo = f(lo);
  double f_hi = f(2.0 * lo);
  if (f_lo >= 0.0) return lo;
  if (f_hi <= 0.0) return 2.0 * lo;
  std::uintmax_t max_iter = 200;
  const auto r = boost::math::tools::toms748_solve(
      f, lo, 2.0 * lo, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(45), max_iter);
  return 0.5 * (r.first + r.second);
}

}  // namespace cdpf
