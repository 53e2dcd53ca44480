#include "cdpf/importance_builder.hpp"

#include "cdpf/errors.hpp"

#include <cmath>

namespace cdpf {

EkfMoments ekf_predict(const EkfMoments& moments, const DriftFn& drift, const JacobianFn& jacobian,
                       const Matrix& state_diffusion, const TimeGrid& grid) {
  const auto n = moments.mean.size();
  if (moments.cov.rows() != n || moments.cov.cols() != n || state_diffusion.rows() != n ||
      state_diffusion.cols() != n) {
    throw InvalidArgument("ekf_predict: moment and diffusion dimensions do not match");
  }
  const double dt = grid.dt();
  EkfMoments m = moments;
  for (int j = 0; j < grid.n_steps; ++j) {
    const double t = grid.time(j);
    const Matrix jac = jacobian(m.mean, t);
    if (!jac.allFinite()) throw IntegrationError("ekf_predict: non-finite Jacobian");
    const Vector f = evaluate_checked(drift, m.mean, t, n, "EKF drift");
    const Matrix fp = jac * m.cov;
    m.mean += f * dt;
    m.cov = symmetrized(m.cov + (fp + fp.transpose() + state_diffusion) * dt);
    if (!m.cov.allFinite()) throw IntegrationError("ekf_predict: non-finite covariance");
  }
  return m;
}

EkfMoments ekf_condition(const EkfMoments& moments, const Matrix& h, const Matrix& r,
                         const Vector& y) {
  const KalmanUpdate ku = kalman_update(GaussianBlock{moments.mean, moments.cov}, h, r, y);
  return EkfMoments{ku.block.mean, ku.block.cov};
}

BridgeSpec extract_bridge(const EkfMoments& posterior, std::span<const Eigen::Index> indices,
                          double interval, const Matrix& diffusion) {
  const auto k = static_cast<Eigen::Index>(indices.size());
  if (k == 0 || diffusion.rows() != k || diffusion.cols() != k) {
    throw InvalidArgument("extract_bridge: diffusion must match the number of bridged components");
  }
  if (!(interval > 0.0)) throw InvalidArgument("extract_bridge: interval must be positive");
  BridgeSpec b;
  b.interval = interval;
  b.diffusion = diffusion;
  b.target_mean.resize(k);
  b.target_cov.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    b.target_mean(a) = posterior.mean(indices[static_cast<std::size_t>(a)]);
    for (Eigen::Index c = 0; c < k; ++c) {
      b.target_cov(a, c) = posterior.cov(indices[static_cast<std::size_t>(a)],
                                         indices[static_cast<std::size_t>(c)]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> qeig(symmetrized(diffusion) * interval);
  const double floor = kBridgeVarianceFloor * qeig.eigenvalues().minCoeff();
  if (!(floor > 0.0)) throw InvalidArgument("extract_bridge: diffusion must be positive definite");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(b.target_cov));
  if (eig.eigenvalues().minCoeff() < floor) {
    const Vector clamped = eig.eigenvalues().cwiseMax(floor);
    b.target_cov =
        symmetrized(eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose());
  } else {
    b.target_cov = symmetrized(b.target_cov);
  }
  return b;
}

ImportanceSpec build_bridge(const Vector& x_prev, const BridgeSpec& bridge) {
  const auto k = bridge.target_mean.size();
  if (x_prev.size() != k) throw InvalidArgument("build_bridge: x_prev has the wrong dimension");
  Eigen::LLT<Matrix> p_llt(bridge.target_cov / bridge.interval);
  Eigen::LLT<Matrix> q_llt(bridge.diffusion);
  if (p_llt.info() != Eigen::Success || q_llt.info() != Eigen::Success) {
    throw InvalidArgument("build_bridge: nonpositive target variance after flooring");
  }
  Matrix dispersion(k, k);
  if (k == 1) {
    dispersion(0, 0) =
        std::sqrt(bridge.target_cov(0, 0) / (bridge.diffusion(0, 0) * bridge.interval));
  } else {
    const Matrix q_factor = q_llt.matrixL();
    dispersion = q_factor.triangularView<Eigen::Lower>().solve<Eigen::OnTheRight>(
        Matrix(p_llt.matrixL()));
  }
  const Vector drift = (bridge.target_mean - x_prev) / bridge.interval;
  return ImportanceSpec{[drift](const Vector&, double) { return drift; },
                        TimeMatrix::constant(std::move(dispersion))};
}

ImportanceSpec build_bridge(double x_prev, double target_mean, double target_var, double interval,
                            double q) {
  if (!(q > 0.0)) throw InvalidArgument("build_bridge: q must be positive");
  EkfMoments posterior{Vector::Constant(1, target_mean), Matrix::Constant(1, 1, target_var)};
  const Eigen::Index idx[] = {0};
  return build_bridge(Vector::Constant(1, x_prev),
                      extract_bridge(posterior, idx, interval, Matrix::Constant(1, 1, q)));
}

}  // namespace cdpf
