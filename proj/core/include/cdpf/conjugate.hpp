#pragma once

#include "cdpf/linalg.hpp"

#include <memory>
#include <span>
#include <string>

namespace cdpf {

/// Conjugate prior over a static parameter, summarized by a fixed-size
/// statistic T. `feature` is whatever the observation model needs from the
/// state (the predicted location for Inv-chi^2, theta_k for Gamma-Poisson).
class ConjugateFamily {
 public:
  virtual ~ConjugateFamily() = default;

  virtual std::string name() const = 0;
  /// Name of the marginalized parameter, used for output columns.
  virtual std::string parameter_name() const = 0;
  virtual Vector prior() const = 0;

  /// T_k = Phi(T_{k-1}, x_k, y_k)
  virtual Vector update(const Vector& stats, const Vector& feature, const Vector& y) const = 0;
  /// log p(y | x, T) = log of the integral of p(y | x, theta) p(theta | T) over theta.
  virtual double marginal_log_likelihood(const Vector& y, const Vector& feature,
                                         const Vector& stats) const = 0;
  /// Throws InvalidArgument if T violates the family invariants.
  virtual void validate(const Vector& stats) const = 0;

  /// E[theta | T]; +inf when the posterior mean does not exist.
  virtual double posterior_mean(const Vector& stats) const = 0;
  virtual double posterior_cdf(const Vector& stats, double value) const = 0;
};

/// sigma^2 ~ Inv-chi^2(nu, s^2) for y ~ N(feature[0], sigma^2).
/// Phi: (nu, s^2) -> (nu + 1, (nu s^2 + r^2) / (nu + 1)); marginal: Student-t.
class InvChi2Family final : public ConjugateFamily {
 public:
  InvChi2Family(double nu0, double scale0);

  std::string name() const override { return "inv_chi2"; }
  std::string parameter_name() const override { return "sigma2"; }
  Vector prior() const override;
  Vector update(const Vector& stats, const Vector& feature, const Vector& y) const override;
  double marginal_log_likelihood(const Vector& y, const Vector& feature,
                                 const Vector& stats) const override;
  void validate(const Vector& stats) const override;
  double posterior_mean(const Vector& stats) const override;
  double posterior_cdf(const Vector& stats, double value) const override;

 private:
  double nu0_;
  double scale0_;
};

/// N ~ Gamma(alpha, beta) (rate parameterization) for d ~ Poisson(N theta),
/// theta = feature[0]. Phi: (alpha, beta) -> (alpha + d, beta + theta);
/// marginal: negative binomial.
class GammaPoissonFamily final : public ConjugateFamily {
 public:
  GammaPoissonFamily(double alpha0, double beta0);

  std::string name() const override { return "gamma_poisson"; }
  std::string parameter_name() const override { return "population"; }
  Vector prior() const override;
  Vector update(const Vector& stats, const Vector& feature, const Vector& y) const override;
  double marginal_log_likelihood(const Vector& y, const Vector& feature,
                                 const Vector& stats) const override;
  void validate(const Vector& stats) const override;
  double posterior_mean(const Vector& stats) const override;
  double posterior_cdf(const Vector& stats, double value) const override;

 private:
  double alpha0_;
  double beta0_;
};

std::shared_ptr<const ConjugateFamily> invchi2_family(double nu0, double scale0);
std::shared_ptr<const ConjugateFamily> gamma_poisson_family(double alpha0, double beta0);

/// Quantile of the weighted mixture sum_i w_i p(theta | T_i), by bisection on the CDF.
double mixture_quantile(const ConjugateFamily& family, std::span<const Vector> stats,
                        std::span<const double> weights, double probability);

}  // namespace cdpf
