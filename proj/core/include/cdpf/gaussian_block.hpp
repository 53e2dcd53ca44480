#pragma once

#include "cdpf/linalg.hpp"

namespace cdpf {

/// Conditional mean and covariance of a linear Gaussian sub-state.
struct GaussianBlock {
  Vector mean;
  Matrix cov;

  bool empty() const noexcept { return mean.size() == 0; }
  Eigen::Index dim() const noexcept { return mean.size(); }
};

/// Result of conditioning a Gaussian on a linear measurement y = H x + r, r ~ N(0, R).
struct KalmanUpdate {
  GaussianBlock block;
  Vector innovation_mean;  // mu = H m
  Matrix innovation_cov;   // S = H P H^T + R
};

/// mu = H m, S = H P H^T + R, K = P H^T S^{-1}, m' = m + K (y - mu), P' = P - K S K^T.
/// P' is symmetrized and projected to PSD if roundoff makes it indefinite.
KalmanUpdate kalman_update(const GaussianBlock& prior, const Matrix& h, const Matrix& r,
                           const Vector& y);

/// log N(y | mean, cov).
double gaussian_log_density(const Vector& y, const Vector& mean, const Matrix& cov);

}  // namespace cdpf
