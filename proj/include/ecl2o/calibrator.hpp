#ifndef ECL2O_CALIBRATOR_HPP
#define ECL2O_CALIBRATOR_HPP

#include <cmath>
#include <limits>
#include <optional>

#include "ecl2o/core.hpp"
#include "ecl2o/costmodel.hpp"

namespace ecl2o {

/// Raised when the trust-optimal lambda2 comes out negative (lambda1 too small for theta).
class NegativeLambda2 : public Error {
 public:
  using Error::Error;
};

/// Weights of the calibrated step: lambda1 on the switching cost to x_{t-1},
/// lambda2 on the pull toward the hitting minimizer, lambda3 on the pull toward the prediction.
struct CalibratorParams {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;

  double theta() const { return lambda3 / lambda1; }
  double weight_sum() const { return lambda1 + lambda2 + lambda3; }

  void validate() const {
    if (!(lambda1 > 0.0 && lambda1 <= 1.0))
      throw ValidationError("CalibratorParams: lambda1 must lie in (0, 1]");
    if (!(lambda2 >= 0.0) || !(lambda3 >= 0.0) || !std::isfinite(lambda2) ||
        !std::isfinite(lambda3))
      throw ValidationError("CalibratorParams: lambda2 and lambda3 must be finite and >= 0");
  }

  static CalibratorParams greedy() { return {1.0, 0.0, 0.0}; }
  static CalibratorParams follow_the_prediction() { return {1.0, 0.0, 1.0}; }
};

/// Optional per-coordinate box for the action set.
struct ActionBounds {
  Vec lo;
  Vec hi;

  ActionBounds(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw DimensionError("ActionBounds: lo/hi dimension mismatch");
    if ((lo.array() > hi.array()).any()) throw ValidationError("ActionBounds: lo > hi");
  }

  static ActionBounds uniform(Eigen::Index d, double lo, double hi) {
    return ActionBounds(Vec::Constant(d, lo), Vec::Constant(d, hi));
  }

  Vec project(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
  bool contains(const Vec& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  bool interior(const Vec& x, double tol = 1e-9) const {
    return ((x - lo).array() > tol).all() && ((hi - x).array() > tol).all();
  }
};

/// lambda2 minimizing the competitive-ratio bound for trust theta = lambda3 / lambda1.
inline double optimal_lambda2(double m, double alpha, double beta, double lambda1, double theta) {
  if (!(m > 0.0 && alpha > 0.0 && beta > 0.0))
    throw ValidationError("optimal_lambda2: m, alpha, beta must be > 0");
  if (!(lambda1 > 0.0 && lambda1 <= 1.0))
    throw ValidationError("optimal_lambda2: lambda1 must lie in (0, 1]");
  if (!(theta >= 0.0)) throw ValidationError("optimal_lambda2: theta must be >= 0");
  const double a = 1.0 + beta / m * theta;
  // sqrt(a^2 + k) + 1 - 2/lambda1 - (a - 1), with sqrt(a^2 + k) - a written without
  // cancellation for large theta.
  const double k = 4.0 * beta * beta / (alpha * m);
  const double root_minus_a = k / (std::sqrt(a * a + k) + a);
  const double lambda2 = m * lambda1 / (2.0 * beta) * (root_minus_a + 2.0 - 2.0 / lambda1);
  if (lambda2 < 0.0) {
    if (lambda2 > -1e-14) return 0.0;
    throw NegativeLambda2("optimal_lambda2: lambda1 = " + detail::fmt_real(lambda1) +
                          " is infeasible for theta = " + detail::fmt_real(theta) +
                          " (lambda2 = " + detail::fmt_real(lambda2) + ")");
  }
  return lambda2;
}

/// Calibrator weights with lambda3 = theta * lambda1 and the bound-optimal lambda2.
inline CalibratorParams params_for_trust(const CostModel& model, double theta,
                                         double lambda1 = 1.0) {
  CalibratorParams p;
  p.lambda1 = lambda1;
  p.lambda3 = theta * lambda1;
  p.lambda2 = optimal_lambda2(model.m(), model.alpha(), model.beta(), lambda1, theta);
  return p;
}

/// R-OBD: no prediction term, bound-optimal lambda2.
inline CalibratorParams robd_params(const CostModel& model, double lambda1 = 1.0) {
  return params_for_trust(model, 0.0, lambda1);
}

namespace detail {

constexpr int kMaxNewton = 100;
constexpr double kGradTol = 1e-10;

inline double grad_tol(const Vec& scale_ref) {
  return kGradTol * std::max(1.0, scale_ref.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// argmin_x f(x, y).
inline Vec hitting_minimizer(const CostModel& model, const Vec& y) {
  if (model.hitting.is_quadratic_tracking()) {
    detail::require_dim(y, model.dim(), "hitting_minimizer(y)");
    return y;
  }
  Vec x = Vec::Zero(model.dim());
  for (int it = 0; it < detail::kMaxNewton; ++it) {
    const Vec g = model.hitting.grad(x, y);
    if (g.norm() <= detail::grad_tol(x)) return x;
    const Vec step = model.hitting.hessian(x, y).llt().solve(g);
    const double f0 = model.hitting.value(x, y);
    double t = 1.0;
    Vec cand = x - step;
    while (model.hitting.value(cand, y) > f0 - 1e-4 * t * g.dot(step) && t > 1e-12) {
      t *= 0.5;
      cand = x - t * step;
    }
    x = cand;
  }
  if (model.hitting.grad(x, y).norm() <= detail::grad_tol(x)) return x;
  throw ConvergenceError("hitting_minimizer: Newton did not converge in 100 steps");
}

/// Gradient of the calibrated step objective
/// f(x, y) + lambda1 c(x, x_prev) + lambda2 c(x, v) + lambda3 c(x, x_tilde).
inline Vec calibration_gradient(const CostModel& model, const CalibratorParams& p, const Vec& y,
                                const Vec& x_prev, const Vec& v, const Vec& x_tilde,
                                const Vec& x) {
  const Vec pull = p.lambda1 * (x - x_prev) + p.lambda2 * (x - v) + p.lambda3 * (x - x_tilde);
  return model.hitting.grad(x, y) + 2.0 * (model.Q() * pull);
}

inline double calibration_objective(const CostModel& model, const CalibratorParams& p,
                                    const Vec& y, const Vec& x_prev, const Vec& v,
                                    const Vec& x_tilde, const Vec& x) {
  const auto& sw = model.switching;
  return model.hitting.value(x, y) + p.lambda1 * sw.value(x, x_prev) + p.lambda2 * sw.value(x, v) +
         p.lambda3 * sw.value(x, x_tilde);
}

namespace detail {

inline Vec calibrate_unconstrained(const CostModel& model, const CalibratorParams& p,
                                   const Vec& y, const Vec& x_prev, const Vec& v,
                                   const Vec& x_tilde) {
  const Mat& Q = model.Q();
  const auto d = model.dim();
  const double s = p.weight_sum();
  if (model.hitting.is_quadratic_tracking()) {
    const Mat A = Mat::Identity(d, d) + 2.0 * s * Q;
    const Vec rhs = y + 2.0 * (Q * (p.lambda1 * x_prev + p.lambda2 * v + p.lambda3 * x_tilde));
    return A.llt().solve(rhs);
  }
  Vec x = x_prev;
  for (int it = 0; it < kMaxNewton; ++it) {
    const Vec g = calibration_gradient(model, p, y, x_prev, v, x_tilde, x);
    if (g.norm() <= grad_tol(x)) return x;
    const Mat H = model.hitting.hessian(x, y) + 2.0 * s * Q;
    const Vec step = H.llt().solve(g);
    const double f0 = calibration_objective(model, p, y, x_prev, v, x_tilde, x);
    double t = 1.0;
    Vec cand = x - step;
    while (calibration_objective(model, p, y, x_prev, v, x_tilde, cand) >
               f0 - 1e-4 * t * g.dot(step) &&
           t > 1e-12) {
      t *= 0.5;
      cand = x - t * step;
    }
    x = cand;
  }
  if (calibration_gradient(model, p, y, x_prev, v, x_tilde, x).norm() <= grad_tol(x)) return x;
  throw ConvergenceError("calibrate_step: damped Newton did not converge");
}

inline Vec calibrate_projected(const CostModel& model, const CalibratorParams& p, const Vec& y,
                               const Vec& x_prev, const Vec& v, const Vec& x_tilde,
                               const ActionBounds& box, Vec x) {
  const double s = p.weight_sum();
  constexpr int kMaxIter = 200000;
  for (int it = 0; it < kMaxIter; ++it) {
    const Vec g = calibration_gradient(model, p, y, x_prev, v, x_tilde, x);
    if ((x - box.project(x - g)).norm() <= grad_tol(x)) return x;
    const Mat H = model.hitting.hessian(x, y) + 2.0 * s * model.Q();
    double L = Eigen::SelfAdjointEigenSolver<Mat>(H, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    const double f0 = calibration_objective(model, p, y, x_prev, v, x_tilde, x);
    Vec cand = box.project(x - g / L);
    // Backtrack on the quadratic upper model for non-quadratic costs.
    for (int bt = 0; bt < 60; ++bt) {
      const Vec dx = cand - x;
      if (calibration_objective(model, p, y, x_prev, v, x_tilde, cand) <=
          f0 + g.dot(dx) + 0.5 * L * dx.squaredNorm() + 1e-15 * std::abs(f0))
        break;
      L *= 2.0;
      cand = box.project(x - g / L);
    }
    x = cand;
  }
  throw ConvergenceError("calibrate_step: projected gradient did not converge");
}

}  // namespace detail

/// One MLA-ROBD step with a precomputed hitting minimizer v.
inline Vec calibrate_step(const CostModel& model, const CalibratorParams& params, const Vec& y,
                          const Vec& x_prev, const Vec& x_tilde, const Vec& v,
                          const std::optional<ActionBounds>& bounds = std::nullopt) {
  const auto d = model.dim();
  detail::require_dim(x_prev, d, "calibrate_step(x_prev)");
  detail::require_dim(x_tilde, d, "calibrate_step(x_tilde)");
  detail::require_dim(v, d, "calibrate_step(v)");
  params.validate();
  Vec x = detail::calibrate_unconstrained(model, params, y, x_prev, v, x_tilde);
  if (!bounds || bounds->contains(x)) return x;
  detail::require_dim(bounds->lo, d, "calibrate_step(bounds)");
  return detail::calibrate_projected(model, params, y, x_prev, v, x_tilde, *bounds,
                                     bounds->project(x));
}

inline Vec calibrate_step(const CostModel& model, const CalibratorParams& params, const Vec& y,
                          const Vec& x_prev, const Vec& x_tilde,
                          const std::optional<ActionBounds>& bounds = std::nullopt) {
  return calibrate_step(model, params, y, x_prev, x_tilde, hitting_minimizer(model, y), bounds);
}

/// Sensitivities of the calibrated action at an unconstrained optimum.
struct StepJacobians {
  Mat pred;  // d x_t / d x_tilde_t
  Mat prev;  // d x_t / d x_{t-1}
};

/// Implicit-function Jacobians from the stationarity condition: Z = Hess f + 2 (l1+l2+l3) Q,
/// d x_t / d x_tilde = 2 l3 Z^-1 Q, d x_t / d x_prev = 2 l1 Z^-1 Q.
inline StepJacobians step_jacobians(const CostModel& model, const CalibratorParams& params,
                                    const Vec& y, const Vec& x_prev, const Vec& x_tilde,
                                    const Vec& x_t) {
  const auto d = model.dim();
  detail::require_dim(x_prev, d, "step_jacobians(x_prev)");
  detail::require_dim(x_tilde, d, "step_jacobians(x_tilde)");
  detail::require_dim(x_t, d, "step_jacobians(x_t)");
  const Mat Z = model.hitting.hessian(x_t, y) + 2.0 * params.weight_sum() * model.Q();
  Eigen::LLT<Mat> llt(Z);
  if (llt.info() != Eigen::Success) throw ValidationError("step_jacobians: singular Z_t");
  const Mat ZinvQ = llt.solve(model.Q());
  return {2.0 * params.lambda3 * ZinvQ, 2.0 * params.lambda1 * ZinvQ};
}

}  // namespace ecl2o

#endif  // ECL2O_CALIBRATOR_HPP
