#include "cdpf/linalg.hpp"

#include "cdpf/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace cdpf {

TimeMatrix TimeMatrix::constant(Matrix value) {
  TimeMatrix m;
  m.rows_ = value.rows();
  m.cols_ = value.cols();
  m.constant_ = std::move(value);
  return m;
}

TimeMatrix TimeMatrix::varying(std::function<Matrix(double)> fn, Eigen::Index rows,
                               Eigen::Index cols) {
  if (!fn) throw InvalidArgument("TimeMatrix::varying: empty function");
  TimeMatrix m;
  m.fn_ = std::move(fn);
  m.rows_ = rows;
  m.cols_ = cols;
  return m;
}

Matrix TimeMatrix::at(double t) const {
  if (constant_) return *constant_;
  if (!fn_) throw InvalidArgument("TimeMatrix: evaluated before initialization");
  Matrix value = fn_(t);
  if (value.rows() != rows_ || value.cols() != cols_) {
    std::ostringstream os;
    os << "TimeMatrix: function returned " << value.rows() << "x" << value.cols()
       << " at t=" << t << ", expected " << rows_ << "x" << cols_;
    throw InvalidArgument(os.str());
  }
  return value;
}

double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  if (m.rows() == 1 && m.cols() == 1) {
    return m(0, 0) == 0.0 || !std::isfinite(m(0, 0)) ? std::numeric_limits<double>::infinity()
                                                      : 1.0;
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  if (smallest == 0.0 || !std::isfinite(sv(0))) return std::numeric_limits<double>::infinity();
  return sv(0) / smallest;
}

Matrix checked_inverse(const Matrix& m, double t, const char* what, double limit) {
  if (m.rows() != m.cols()) {
    throw MatrixInversionError(std::string(what) + " is not square", t);
  }
  const double cond = condition_number(m);
  if (!(cond <= limit)) {
    std::ostringstream os;
    os << what << " is singular or badly conditioned at t=" << t << " (condition number " << cond
       << ")";
    throw MatrixInversionError(os.str(), t);
  }
  if (m.rows() == 1) return Matrix::Constant(1, 1, 1.0 / m(0, 0));
  return m.partialPivLu().inverse();
}

Matrix symmetrized(const Matrix& p) { return 0.5 * (p + p.transpose()); }

Matrix project_psd(const Matrix& p, double tol) {
  Matrix sym = symmetrized(p);
  if (sym.size() == 0) return sym;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.eigenvalues().minCoeff() >= -tol) return sym;
  Vector clamped = eig.eigenvalues().cwiseMax(0.0);
  return symmetrized(eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose());
}

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace cdpf
