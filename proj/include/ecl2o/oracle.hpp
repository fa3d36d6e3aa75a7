#ifndef ECL2O_ORACLE_HPP
#define ECL2O_ORACLE_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "ecl2o/calibrator.hpp"
#include "ecl2o/core.hpp"
#include "ecl2o/costmodel.hpp"

namespace ecl2o {

/// Block-tridiagonal symmetric positive-definite system with T diagonal blocks D_t and
/// off-diagonal blocks B_t coupling t and t+1 (B_t is the (t, t+1) block; the (t+1, t)
/// block is B_t^T). Factored by block Cholesky in O(T d^3).
class BlockTridiagonalCholesky {
 public:
  BlockTridiagonalCholesky(std::vector<Mat> diag, std::vector<Mat> off) {
    const auto T = diag.size();
    if (T == 0) throw DimensionError("BlockTridiagonalCholesky: empty system");
    if (off.size() + 1 != T) throw DimensionError("BlockTridiagonalCholesky: need T-1 off blocks");
    off_ = std::move(off);
    chol_.reserve(T);
    coupling_.reserve(T);
    // S_1 = D_1, S_t = D_t - B_{t-1}^T S_{t-1}^{-1} B_{t-1}; coupling_[t] = S_{t-1}^{-1} B_{t-1}.
    for (std::size_t t = 0; t < T; ++t) {
      Mat S = std::move(diag[t]);
      if (t > 0) {
        Mat C = chol_.back().solve(off_[t - 1]);
        S.noalias() -= off_[t - 1].transpose() * C;
        coupling_.push_back(std::move(C));
      } else {
        coupling_.emplace_back();
      }
      Eigen::LLT<Mat> llt(S);
      if (llt.info() != Eigen::Success)
        throw ValidationError("BlockTridiagonalCholesky: system is not positive definite at block " +
                              std::to_string(t + 1));
      chol_.push_back(std::move(llt));
    }
  }

  std::vector<Vec> solve(std::vector<Vec> rhs) const {
    const auto T = chol_.size();
    if (rhs.size() != T) throw DimensionError("BlockTridiagonalCholesky: rhs length mismatch");
    // Forward elimination: r'_t = r_t - B_{t-1}^T S_{t-1}^{-1} r'_{t-1}.
    for (std::size_t t = 1; t < T; ++t)
      rhs[t].noalias() -= off_[t - 1].transpose() * chol_[t - 1].solve(rhs[t - 1]);
    std::vector<Vec> x(T);
    x[T - 1] = chol_[T - 1].solve(rhs[T - 1]);
    for (std::size_t t = T - 1; t-- > 0;)
      x[t] = chol_[t].solve(rhs[t]) - coupling_[t + 1] * x[t + 1];
    return x;
  }

 private:
  std::vector<Mat> off_;
  std::vector<Eigen::LLT<Mat>> chol_;
  std::vector<Mat> coupling_;
};

struct OracleSolution {
  std::vector<Vec> actions;
  double cost = 0.0;
  double grad_norm = 0.0;
};

struct LConstrainedSolution {
  std::vector<Vec> actions;
  double cost = 0.0;
  double switching_total = 0.0;
  double dual_mu = 0.0;  // +inf when L = 0 pins every action to x0
};

/// Total cost of an arbitrary action trajectory on an instance.
inline double trajectory_cost(const ProblemInstance& inst, const CostModel& model,
                              const std::vector<Vec>& xs) {
  if (xs.size() != inst.horizon()) throw DimensionError("trajectory_cost: length mismatch");
  double s = 0.0;
  Vec prev = inst.x0();
  for (std::size_t t = 0; t < xs.size(); ++t) {
    s += model.hitting.value(xs[t], inst.context(t)) + model.switching.value(xs[t], prev);
    prev = xs[t];
  }
  return s;
}

inline double trajectory_switching(const ProblemInstance& inst, const CostModel& model,
                                   const std::vector<Vec>& xs) {
  double s = 0.0;
  Vec prev = inst.x0();
  for (const auto& x : xs) {
    s += model.switching.value(x, prev);
    prev = x;
  }
  return s;
}

/// Gradient of sum_t f(x_t, y_t) + w * c(x_t, x_{t-1}) with respect to the whole trajectory.
inline std::vector<Vec> trajectory_gradient(const ProblemInstance& inst, const CostModel& model,
                                            const std::vector<Vec>& xs, double w = 1.0) {
  const auto T = xs.size();
  const Mat& Q = model.Q();
  std::vector<Vec> g(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Vec& prev = t == 0 ? inst.x0() : xs[t - 1];
    g[t] = model.hitting.grad(xs[t], inst.context(t)) + 2.0 * w * (Q * (xs[t] - prev));
    if (t + 1 < T) g[t] -= 2.0 * w * (Q * (xs[t + 1] - xs[t]));
  }
  return g;
}

namespace detail {

inline double stacked_norm(const std::vector<Vec>& vs) {
  double s = 0.0;
  for (const auto& v : vs) s += v.squaredNorm();
  return std::sqrt(s);
}

/// Minimizes sum f + w * sum c over x_1..x_T.
inline std::vector<Vec> solve_weighted(const ProblemInstance& inst, const CostModel& model,
                                       double w) {
  const auto T = inst.horizon();
  const auto d = model.dim();
  detail::require_dim(inst.x0(), d, "oracle(x0)");
  const Mat Q2 = 2.0 * w * model.Q();
  std::vector<Mat> off(T - 1, -Q2);

  auto diag_blocks = [&](const std::vector<Vec>& xs) {
    std::vector<Mat> D(T);
    for (std::size_t t = 0; t < T; ++t) {
      D[t] = model.hitting.hessian(xs[t], inst.context(t)) + Q2;
      if (t + 1 < T) D[t] += Q2;
    }
    return D;
  };

  if (model.hitting.is_quadratic_tracking()) {
    std::vector<Vec> zeros(T, Vec::Zero(d));
    BlockTridiagonalCholesky sys(diag_blocks(zeros), off);
    std::vector<Vec> rhs(inst.contexts());
    rhs[0] += Q2 * inst.x0();
    return sys.solve(std::move(rhs));
  }

  // Full-trajectory damped Newton; the Hessian keeps the block-tridiagonal structure.
  std::vector<Vec> xs(T, inst.x0());
  auto objective = [&](const std::vector<Vec>& z) {
    double s = 0.0;
    Vec prev = inst.x0();
    for (std::size_t t = 0; t < T; ++t) {
      s += model.hitting.value(z[t], inst.context(t)) + w * model.switching.value(z[t], prev);
      prev = z[t];
    }
    return s;
  };
  const double tol = 1e-9 * std::max(1.0, std::sqrt(static_cast<double>(T)));
  for (int it = 0; it < 200; ++it) {
    const auto g = trajectory_gradient(inst, model, xs, w);
    if (stacked_norm(g) <= tol) return xs;
    BlockTridiagonalCholesky sys(diag_blocks(xs), off);
    const auto step = sys.solve(g);
    double slope = 0.0;
    for (std::size_t t = 0; t < T; ++t) slope += g[t].dot(step[t]);
    const double f0 = objective(xs);
    double a = 1.0;
    std::vector<Vec> cand(T);
    for (;;) {
      for (std::size_t t = 0; t < T; ++t) cand[t] = xs[t] - a * step[t];
      if (objective(cand) <= f0 - 1e-4 * a * slope || a < 1e-12) break;
      a *= 0.5;
    }
    xs = std::move(cand);
  }
  if (stacked_norm(trajectory_gradient(inst, model, xs, w)) <= tol) return xs;
  throw ConvergenceError("offline_optimal: trajectory Newton did not converge");
}

}  // namespace detail

/// Joint minimizer of sum_t f(x_t, y_t) + c(x_t, x_{t-1}) with full hindsight.
inline OracleSolution offline_optimal(const ProblemInstance& inst, const CostModel& model) {
  OracleSolution sol;
  sol.actions = detail::solve_weighted(inst, model, 1.0);
  sol.cost = trajectory_cost(inst, model, sol.actions);
  sol.grad_norm = detail::stacked_norm(trajectory_gradient(inst, model, sol.actions));
  return sol;
}

/// Offline optimum subject to sum_t c(x_t, x_{t-1}) <= L, by bisection on the dual variable.
inline LConstrainedSolution l_constrained_optimal(const ProblemInstance& inst,
                                                  const CostModel& model, double L) {
  if (!(L >= 0.0)) throw ValidationError("l_constrained_optimal: L must be >= 0");
  auto make = [&](std::vector<Vec> xs, double mu) {
    LConstrainedSolution s;
    s.cost = trajectory_cost(inst, model, xs);
    s.switching_total = trajectory_switching(inst, model, xs);
    s.actions = std::move(xs);
    s.dual_mu = mu;
    return s;
  };

  auto unconstrained = detail::solve_weighted(inst, model, 1.0);
  if (trajectory_switching(inst, model, unconstrained) <= L)
    return make(std::move(unconstrained), 0.0);
  if (L == 0.0)
    return make(std::vector<Vec>(inst.horizon(), inst.x0()),
                std::numeric_limits<double>::infinity());

  const double tol = 1e-6 * std::max(1.0, L);
  // Also keeps mu * |s - L| (complementary slackness) small and the budget strictly met.
  auto accept = [&](double s, double mu) {
    return s <= L + 1e-8 && std::abs(s - L) <= tol && mu * std::abs(s - L) <= 1e-7;
  };
  double lo = 0.0;
  double hi = 1.0;
  std::vector<Vec> xs_hi = detail::solve_weighted(inst, model, 1.0 + hi);
  int doublings = 0;
  while (trajectory_switching(inst, model, xs_hi) > L) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 200)
      throw ConvergenceError("l_constrained_optimal: failed to bracket the dual variable");
    xs_hi = detail::solve_weighted(inst, model, 1.0 + hi);
  }
  if (accept(trajectory_switching(inst, model, xs_hi), hi)) return make(xs_hi, hi);
  for (int it = 0; it < 500; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto xs = detail::solve_weighted(inst, model, 1.0 + mid);
    const double s = trajectory_switching(inst, model, xs);
    if (accept(s, mid)) return make(std::move(xs), mid);
    if (s > L)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= std::numeric_limits<double>::epsilon() * hi) break;
  }
  // The bracket collapsed; the feasible side is within machine precision of the budget.
  auto xs = detail::solve_weighted(inst, model, 1.0 + hi);
  const double s = trajectory_switching(inst, model, xs);
  if (s <= L + 1e-8) return make(std::move(xs), hi);
  throw ConvergenceError("l_constrained_optimal: dual bisection failed (switching " +
                         detail::fmt_real(s) + " vs L " + detail::fmt_real(L) + ")");
}

/// Smallest rho for which the predictions are rho-accurate against the oracle.
inline double prediction_error_rho(const std::vector<Vec>& predictions,
                                   const OracleSolution& oracle, double cost_floor = 0.0) {
  if (predictions.size() != oracle.actions.size())
    throw DimensionError("prediction_error_rho: length mismatch");
  if (!(oracle.cost > cost_floor) || oracle.cost <= 0.0)
    throw ZeroOptimalCost("prediction_error_rho: oracle cost " + detail::fmt_real(oracle.cost) +
                          " is at or below the floor");
  double s = 0.0;
  for (std::size_t t = 0; t < predictions.size(); ++t)
    s += (predictions[t] - oracle.actions[t]).squaredNorm();
  return s / oracle.cost;
}

/// Absolute squared distance of the predictions to the L-constrained oracle's actions.
inline double l_rho(const std::vector<Vec>& predictions, const LConstrainedSolution& sol) {
  if (predictions.size() != sol.actions.size()) throw DimensionError("l_rho: length mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < predictions.size(); ++t)
    s += (predictions[t] - sol.actions[t]).squaredNorm();
  return s;
}

}  // namespace ecl2o

#endif  // ECL2O_ORACLE_HPP
