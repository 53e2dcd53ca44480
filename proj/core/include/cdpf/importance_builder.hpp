#pragma once

#include "cdpf/gaussian_block.hpp"
#include "cdpf/girsanov.hpp"
#include "cdpf/sde_core.hpp"

#include <functional>
#include <span>

namespace cdpf {

/// Gaussian approximation N(m, P) of the state used to build importance processes.
struct EkfMoments {
  Vector mean;
  Matrix cov;
};

using JacobianFn = std::function<Matrix(const Vector& x, double t)>;

/// Euler integration over the grid of the EKF moment equations
///   dm/dt = f(m, t),  dP/dt = F(m) P + P F(m)^T + Q_eff
/// where Q_eff = L Q L^T is the state-space diffusion (n x n).
EkfMoments ekf_predict(const EkfMoments& moments, const DriftFn& drift, const JacobianFn& jacobian,
                       const Matrix& state_diffusion, const TimeGrid& grid);

/// Gaussian conditioning on y = H x + r; shares its arithmetic with kalman_update.
EkfMoments ekf_condition(const EkfMoments& moments, const Matrix& h, const Matrix& r,
                         const Vector& y);

/// Endpoint law a bridge proposal has to reach over one interval.
struct BridgeSpec {
  Vector target_mean;
  Matrix target_cov;
  double interval = 0.0;
  Matrix diffusion;  // Q of the driving noise
};

/// Relative floor on the bridge endpoint variance, in units of Q * interval.
inline constexpr double kBridgeVarianceFloor = 1e-8;

/// Picks the noise-driven components `indices` of the posterior. The
/// covariance block is floored at kBridgeVarianceFloor * Q * interval.
BridgeSpec extract_bridge(const EkfMoments& posterior, std::span<const Eigen::Index> indices,
                          double interval, const Matrix& diffusion);

/// Constant-drift, constant-dispersion proposal
///   g = (m_k - x_prev) / interval,  B = chol(P_k / interval) chol(Q)^{-1}
/// whose Euler endpoint has mean m_k and covariance P_k.
ImportanceSpec build_bridge(const Vector& x_prev, const BridgeSpec& bridge);

/// Scalar form: g = (m - x_prev) / interval, B = sqrt(P / (q interval)).
ImportanceSpec build_bridge(double x_prev, double target_mean, double target_var, double interval,
                            double q);

}  // namespace cdpf
