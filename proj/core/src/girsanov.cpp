#include "cdpf/girsanov.hpp"

#include "cdpf/errors.hpp"

#include <cmath>
#include <sstream>

namespace cdpf {
namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

void check_llr(double llr, double t) {
  if (!std::isfinite(llr)) {
    std::ostringstream os;
    os << "log-likelihood ratio became non-finite at t=" << t;
    throw IntegrationError(os.str());
  }
}

}  // namespace

double CoupledPathState::likelihood_ratio() const { return std::exp(llr.value); }

CouplingFactors coupling_factors(const Matrix& dispersion, const Matrix& importance_dispersion,
                                 const Matrix& diffusion, double t, double condition_limit) {
  if (dispersion.rows() != dispersion.cols() ||
      importance_dispersion.rows() != dispersion.rows() ||
      importance_dispersion.cols() != dispersion.cols() || diffusion.rows() != dispersion.cols()) {
    throw InvalidArgument("coupling_factors: L, B and Q must be square with matching dimensions");
  }
  const Matrix l_inv = checked_inverse(dispersion, t, "dispersion L", condition_limit);
  const Matrix q_inv = checked_inverse(diffusion, t, "diffusion Q", condition_limit);
  CouplingFactors out;
  if (bitwise_equal(dispersion, importance_dispersion)) {
    out.scale = Matrix::Identity(dispersion.rows(), dispersion.cols());
  } else {
    out.scale = dispersion * checked_inverse(importance_dispersion, t, "importance dispersion B",
                                             condition_limit);
  }
  out.noise_weight = l_inv.transpose() * q_inv;
  out.drift_metric = symmetrized(l_inv.transpose() * q_inv * l_inv);
  return out;
}

CouplingCache::CouplingCache(const TimeMatrix& dispersion, const TimeMatrix& importance_dispersion,
                             const DiffusionSpec& diffusion, double condition_limit)
    : dispersion_(dispersion),
      importance_dispersion_(importance_dispersion),
      diffusion_(diffusion),
      condition_limit_(condition_limit),
      constant_(dispersion.is_constant() && importance_dispersion.is_constant() &&
                diffusion.is_time_constant()) {}

const CouplingFactors& CouplingCache::at(double t) {
  if (!(constant_ && ready_)) {
    factors_ = coupling_factors(dispersion_.at(t), importance_dispersion_.at(t), diffusion_.at(t),
                                t, condition_limit_);
    ready_ = true;
  }
  return factors_;
}

Vector step_scaled_process(const Vector& s_star, const CouplingFactors& factors, const Vector& ds) {
  return s_star + factors.scale * ds;
}

Vector step_scaled_process(const Vector& s_star, const Matrix& dispersion,
                           const Matrix& importance_dispersion, double t, const Vector& ds) {
  if (bitwise_equal(dispersion, importance_dispersion)) return s_star + ds;
  return s_star +
         dispersion * checked_inverse(importance_dispersion, t, "importance dispersion B") * ds;
}

double step_llr(double llr, const Vector& f_at_sstar, const Vector& g_at_s,
                const CouplingFactors& factors, double dt, const Vector& dbeta) {
  const Vector d = f_at_sstar - factors.scale * g_at_s;
  if (!d.allFinite()) throw IntegrationError("likelihood-ratio drift difference is not finite");
  return llr + d.dot(factors.noise_weight * dbeta) - 0.5 * d.dot(factors.drift_metric * d) * dt;
}

double step_llr(double llr, const Vector& f_at_sstar, const Vector& g_at_s,
                const Matrix& dispersion, const Matrix& importance_dispersion,
                const Matrix& diffusion, double t, double dt, const Vector& dbeta) {
  return step_llr(llr, f_at_sstar, g_at_s,
                  coupling_factors(dispersion, importance_dispersion, diffusion, t), dt, dbeta);
}

double step_llr_singular(double llr, const Vector& f2_at_sstar, const Vector& g2_at_s,
                         const CouplingFactors& factors, double dt, const Vector& dbeta) {
  return step_llr(llr, f2_at_sstar, g2_at_s, factors, dt, dbeta);
}

double step_llr_singular(double llr, const Vector& f2_at_sstar, const Vector& g2_at_s,
                         const Matrix& dispersion, const Matrix& importance_dispersion,
                         const Matrix& diffusion, double t, double dt, const Vector& dbeta) {
  return step_llr(llr, f2_at_sstar, g2_at_s, dispersion, importance_dispersion, diffusion, t, dt,
                  dbeta);
}

CoupledPathState propagate_coupled(const SdeModel& model, const ImportanceSpec& imp,
                                   const Vector& x_prev, const TimeGrid& grid,
                                   const BrownianIncrements& incs,
                                   const CoupledStepHook& hook) {
  if (incs.size() != static_cast<std::size_t>(grid.n_steps)) {
    throw InvalidArgument("propagate_coupled: increment count does not match the grid");
  }
  if (x_prev.size() != model.dim_state || !x_prev.allFinite()) {
    throw InvalidArgument("propagate_coupled: previous state must be finite with dim_state entries");
  }
  const double dt = grid.dt();
  const auto n = model.dim_state;
  CouplingCache cache(model.dispersion, imp.dispersion, model.diffusion);
  CoupledPathState st{x_prev, x_prev, {}};
  for (int j = 0; j < grid.n_steps; ++j) {
    const double t = grid.time(j);
    const Vector& dbeta = incs[static_cast<std::size_t>(j)];
    if (hook) hook(j, t, st);
    try {
      const CouplingFactors& fac = cache.at(t);
      const Vector g = evaluate_checked(imp.drift, st.s, t, n, "importance drift");
      const Vector f = evaluate_checked(model.drift, st.s_star, t, n, "drift");
      const Vector ds = g * dt + imp.dispersion.at(t) * dbeta;
      st.llr.value = step_llr(st.llr.value, f, g, fac, dt, dbeta);
      check_llr(st.llr.value, t);
      st.s += ds;
      st.s_star = step_scaled_process(st.s_star, fac, ds);
      if (model.project) {
        model.project(st.s);
        model.project(st.s_star);
      }
      if (!st.s.allFinite() || !st.s_star.allFinite()) {
        std::ostringstream os;
        os << "coupled paths became non-finite at t=" << t;
        throw IntegrationError(os.str());
      }
    } catch (const IntegrationError& e) {
      std::ostringstream os;
      os << "step " << j << ": " << e.what();
      throw IntegrationError(os.str());
    }
  }
  return st;
}

CoupledPathState propagate_coupled(const SplitSdeModel& model, const ImportanceSpec& imp,
                                   const Vector& x_prev, const TimeGrid& grid,
                                   const BrownianIncrements& incs,
                                   const CoupledStepHook& hook) {
  if (incs.size() != static_cast<std::size_t>(grid.n_steps)) {
    throw InvalidArgument("propagate_coupled: increment count does not match the grid");
  }
  if (x_prev.size() != model.dim_state() || !x_prev.allFinite()) {
    throw InvalidArgument("propagate_coupled: previous state must be finite with dim_state entries");
  }
  const double dt = grid.dt();
  const auto nd = model.dim_det;
  const auto ns = model.dim_stoch;
  CouplingCache cache(model.dispersion, imp.dispersion, model.diffusion);
  CoupledPathState st{x_prev, x_prev, {}};
  for (int j = 0; j < grid.n_steps; ++j) {
    const double t = grid.time(j);
    const Vector& dbeta = incs[static_cast<std::size_t>(j)];
    if (hook) hook(j, t, st);
    try {
      const CouplingFactors& fac = cache.at(t);
      const Vector g2 = evaluate_checked(imp.drift, st.s, t, ns, "importance drift");
      const Vector f2 = evaluate_checked(model.stoch_drift, st.s_star, t, ns, "drift");
      const Vector ds2 = g2 * dt + imp.dispersion.at(t) * dbeta;
      st.llr.value = step_llr_singular(st.llr.value, f2, g2, fac, dt, dbeta);
      check_llr(st.llr.value, t);
      if (nd > 0) {
        const Vector f1 = evaluate_checked(model.det_field, st.s, t, nd, "deterministic field");
        const Vector f1_star =
            evaluate_checked(model.det_field, st.s_star, t, nd, "deterministic field");
        st.s.head(nd) += f1 * dt;
        st.s_star.head(nd) += f1_star * dt;
      }
      st.s.tail(ns) += ds2;
      st.s_star.tail(ns) = step_scaled_process(st.s_star.tail(ns), fac, ds2);
      if (model.project) {
        model.project(st.s);
        model.project(st.s_star);
      }
      if (!st.s.allFinite() || !st.s_star.allFinite()) {
        std::ostringstream os;
        os << "coupled paths became non-finite at t=" << t;
        throw IntegrationError(os.str());
      }
    } catch (const IntegrationError& e) {
      std::ostringstream os;
      os << "step " << j << ": " << e.what();
      throw IntegrationError(os.str());
    }
  }
  return st;
}

double estimate_kl(const DriftFn& f, const DriftFn& f_l, const Matrix& sigma,
                   const std::vector<std::vector<Vector>>& paths_from_q, const TimeGrid& grid) {
  if (paths_from_q.empty()) throw InvalidArgument("estimate_kl: no paths");
  Eigen::LLT<Matrix> llt(sigma);
  if (sigma.rows() != sigma.cols() || llt.info() != Eigen::Success ||
      !sigma.isApprox(sigma.transpose(), 1e-12)) {
    throw InvalidArgument("estimate_kl: Sigma must be symmetric positive definite");
  }
  const double dt = grid.dt();
  double total = 0.0;
  for (const auto& path : paths_from_q) {
    if (path.size() != static_cast<std::size_t>(grid.n_steps) + 1) {
      throw InvalidArgument("estimate_kl: path length does not match the grid");
    }
    double integral = 0.0;
    for (int j = 0; j < grid.n_steps; ++j) {
      const double t = grid.time(j);
      const Vector& s = path[static_cast<std::size_t>(j)];
      const Vector d = evaluate_checked(f, s, t, sigma.rows(), "drift f") -
                       evaluate_checked(f_l, s, t, sigma.rows(), "drift f_L");
      integral += 0.5 * d.dot(llt.solve(d)) * dt;
    }
    total += integral;
  }
  return total / static_cast<double>(paths_from_q.size());
}

}  // namespace cdpf
