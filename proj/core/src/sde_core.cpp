#include "cdpf/sde_core.hpp"

#include "cdpf/errors.hpp"

#include <cmath>
#include <sstream>

namespace cdpf {
namespace {

std::string format_state(const Vector& x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  return os.str();
}

Matrix cholesky_or_throw(const Matrix& q, double t) {
  if (q.rows() != q.cols()) {
    throw DiffusionSpecError("diffusion matrix is not square", t);
  }
  if (!q.allFinite() || !q.isApprox(q.transpose(), 1e-12)) {
    std::ostringstream os;
    os << "diffusion matrix is not symmetric at t=" << t;
    throw DiffusionSpecError(os.str(), t);
  }
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "diffusion matrix is not positive definite at t=" << t;
    throw DiffusionSpecError(os.str(), t);
  }
  Matrix l = llt.matrixL();
  if ((l.diagonal().array() <= 0.0).any()) {
    std::ostringstream os;
    os << "diffusion matrix is not positive definite at t=" << t;
    throw DiffusionSpecError(os.str(), t);
  }
  return l;
}

}  // namespace

TimeGrid TimeGrid::make(double t0, double t1, int n_steps) {
  if (!(std::isfinite(t0) && std::isfinite(t1)) || !(t1 > t0)) {
    std::ostringstream os;
    os << "time grid needs t1 > t0, got [" << t0 << ", " << t1 << "]";
    throw InvalidArgument(os.str());
  }
  if (n_steps < 1) throw InvalidArgument("time grid needs n_steps >= 1");
  return TimeGrid{t0, t1, n_steps};
}

DiffusionSpec DiffusionSpec::constant(Matrix q) {
  DiffusionSpec d;
  d.chol_ = cholesky_or_throw(q, 0.0);
  d.q_ = TimeMatrix::constant(std::move(q));
  return d;
}

DiffusionSpec DiffusionSpec::varying(std::function<Matrix(double)> q, Eigen::Index dim) {
  DiffusionSpec d;
  d.q_ = TimeMatrix::varying(std::move(q), dim, dim);
  return d;
}

Matrix DiffusionSpec::increment_factor(double t, double dt) const {
  const double scale = std::sqrt(dt);
  if (q_.is_constant()) return chol_ * scale;
  return cholesky_or_throw(q_.at(t), t) * scale;
}

void SdeModel::validate(double t0) const {
  if (dim_state < 1 || dim_noise < 1) throw InvalidArgument("SdeModel: empty state or noise");
  if (!drift) throw InvalidArgument("SdeModel: missing drift");
  if (dim_state != dim_noise) {
    throw InvalidArgument("SdeModel: non-singular class requires dim_state == dim_noise");
  }
  if (diffusion.dim() != dim_noise) throw InvalidArgument("SdeModel: diffusion dimension mismatch");
  if (dispersion.rows() != dim_state || dispersion.cols() != dim_noise) {
    throw InvalidArgument("SdeModel: dispersion must be dim_state x dim_noise");
  }
  checked_inverse(dispersion.at(t0), t0, "dispersion L");
}

void SplitSdeModel::validate(double t0) const {
  if (dim_stoch < 1 || dim_noise < 1) throw InvalidArgument("SplitSdeModel: empty stochastic block");
  if (dim_det < 0) throw InvalidArgument("SplitSdeModel: negative deterministic dimension");
  if (!stoch_drift || (dim_det > 0 && !det_field)) {
    throw InvalidArgument("SplitSdeModel: missing drift");
  }
  if (dim_stoch != dim_noise) {
    throw InvalidArgument("SplitSdeModel: stochastic block must have dim_stoch == dim_noise");
  }
  if (diffusion.dim() != dim_noise) {
    throw InvalidArgument("SplitSdeModel: diffusion dimension mismatch");
  }
  if (dispersion.rows() != dim_stoch || dispersion.cols() != dim_noise) {
    throw InvalidArgument("SplitSdeModel: dispersion must be dim_stoch x dim_noise");
  }
  checked_inverse(dispersion.at(t0), t0, "dispersion L");
}

Vector evaluate_checked(const DriftFn& fn, const Vector& x, double t, Eigen::Index expected_dim,
                        const char* what) {
  Vector out = fn(x, t);
  if (out.size() != expected_dim) {
    std::ostringstream os;
    os << what << " returned dimension " << out.size() << ", expected " << expected_dim;
    throw InvalidArgument(os.str());
  }
  if (!out.allFinite()) {
    std::ostringstream os;
    os << what << " is not finite at t=" << t << ", state " << format_state(x);
    throw IntegrationError(os.str());
  }
  return out;
}

BrownianIncrements sample_brownian_increments(const TimeGrid& grid, const DiffusionSpec& diff,
                                              Rng& rng) {
  const double dt = grid.dt();
  BrownianIncrements incs;
  incs.reserve(static_cast<std::size_t>(grid.n_steps));
  for (int j = 0; j < grid.n_steps; ++j) {
    const Matrix factor = diff.increment_factor(grid.time(j), dt);
    incs.push_back(factor * standard_normal(diff.dim(), rng));
  }
  return incs;
}

Vector euler_maruyama_step(const Vector& x, const DriftFn& drift, const Matrix& dispersion,
                           double t, double dt, const Vector& dbeta) {
  if (!(dt > 0.0)) throw InvalidArgument("euler_maruyama_step: dt must be positive");
  if (dbeta.size() != dispersion.cols()) {
    throw InvalidArgument("euler_maruyama_step: increment dimension does not match dispersion");
  }
  const Vector f = evaluate_checked(drift, x, t, x.size(), "drift");
  Vector next = x + f * dt + dispersion * dbeta;
  if (!next.allFinite()) {
    std::ostringstream os;
    os << "Euler-Maruyama step produced a non-finite state at t=" << t << " from "
       << format_state(x);
    throw IntegrationError(os.str());
  }
  return next;
}

std::vector<Vector> integrate_sde(const SdeModel& model, const Vector& x0, const TimeGrid& grid,
                                  const BrownianIncrements& incs) {
  if (incs.size() != static_cast<std::size_t>(grid.n_steps)) {
    throw InvalidArgument("integrate_sde: increment count does not match the grid");
  }
  const double dt = grid.dt();
  std::vector<Vector> path;
  path.reserve(incs.size() + 1);
  path.push_back(x0);
  for (int j = 0; j < grid.n_steps; ++j) {
    const double t = grid.time(j);
    Vector next = euler_maruyama_step(path.back(), model.drift, model.dispersion.at(t), t, dt,
                                      incs[static_cast<std::size_t>(j)]);
    if (model.project) model.project(next);
    path.push_back(std::move(next));
  }
  return path;
}

std::vector<Vector> integrate_split_sde(const SplitSdeModel& model, const Vector& x0,
                                        const TimeGrid& grid, const BrownianIncrements& incs) {
  if (incs.size() != static_cast<std::size_t>(grid.n_steps)) {
    throw InvalidArgument("integrate_split_sde: increment count does not match the grid");
  }
  if (x0.size() != model.dim_state()) {
    throw InvalidArgument("integrate_split_sde: initial state has the wrong dimension");
  }
  const double dt = grid.dt();
  const auto nd = model.dim_det;
  const auto ns = model.dim_stoch;
  std::vector<Vector> path;
  path.reserve(incs.size() + 1);
  path.push_back(x0);
  for (int j = 0; j < grid.n_steps; ++j) {
    const double t = grid.time(j);
    const Vector& x = path.back();
    Vector next = x;
    if (nd > 0) {
      next.head(nd) += evaluate_checked(model.det_field, x, t, nd, "deterministic field") * dt;
    }
    next.tail(ns) += evaluate_checked(model.stoch_drift, x, t, ns, "drift") * dt +
                     model.dispersion.at(t) * incs[static_cast<std::size_t>(j)];
    if (!next.allFinite()) {
      std::ostringstream os;
      os << "Euler-Maruyama step produced a non-finite state at t=" << t << " from "
         << format_state(x);
      throw IntegrationError(os.str());
    }
    if (model.project) model.project(next);
    path.push_back(std::move(next));
  }
  return path;
}

std::vector<Vector> integrate_ode(const OdeField& field, const Vector& y0, const TimeGrid& grid) {
  const double dt = grid.dt();
  if (!(dt > 0.0)) throw InvalidArgument("integrate_ode: dt must be positive");
  std::vector<Vector> path;
  path.reserve(static_cast<std::size_t>(grid.n_steps) + 1);
  path.push_back(y0);
  for (int j = 0; j < grid.n_steps; ++j) {
    const double t = grid.time(j);
    const Vector& y = path.back();
    path.push_back(y + evaluate_checked(field.field, y, t, y.size(), "ODE field") * dt);
  }
  return path;
}

}  // namespace cdpf
