#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace cdpf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default bound on the 2-norm condition number of matrices that get inverted.
inline constexpr double kDefaultConditionLimit = 1e12;

/// A matrix-valued function of time that remembers whether it is constant,
/// so callers can factorize it once instead of at every grid point.
class TimeMatrix {
 public:
  TimeMatrix() = default;

  static TimeMatrix constant(Matrix value);
  static TimeMatrix varying(std::function<Matrix(double)> fn, Eigen::Index rows, Eigen::Index cols);

  Matrix at(double t) const;
  bool is_constant() const noexcept { return constant_.has_value(); }
  Eigen::Index rows() const noexcept { return rows_; }
  Eigen::Index cols() const noexcept { return cols_; }

 private:
  std::optional<Matrix> constant_;
  std::function<Matrix(double)> fn_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

/// 2-norm condition number from the singular values.
double condition_number(const Matrix& m);

/// Inverse of a square matrix, throwing MatrixInversionError (tagged with `t`)
/// when the condition number exceeds `limit`.
Matrix checked_inverse(const Matrix& m, double t, const char* what,
                       double limit = kDefaultConditionLimit);

/// (P + P^T) / 2
Matrix symmetrized(const Matrix& p);

/// Symmetrizes and clamps negative eigenvalues to zero when any is below `-tol`.
Matrix project_psd(const Matrix& p, double tol = 0.0);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

}  // namespace cdpf
