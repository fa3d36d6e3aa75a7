#ifndef ECL2O_BOUNDS_HPP
#define ECL2O_BOUNDS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "ecl2o/calibrator.hpp"
#include "ecl2o/oracle.hpp"

namespace ecl2o {

struct BoundInputs {
  double m = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  double rho = 0.0;

  double theta() const { return lambda3 / lambda1; }

  void validate() const {
    if (!(m > 0.0 && alpha > 0.0 && beta > 0.0))
      throw ValidationError("bounds: m, alpha, beta must be > 0");
    if (!(alpha <= beta)) throw ValidationError("bounds: alpha must not exceed beta");
    if (!(lambda1 > 0.0 && lambda1 <= 1.0))
      throw ValidationError("bounds: lambda1 must lie in (0, 1]");
    if (!(lambda2 >= 0.0 && lambda3 >= 0.0 && rho >= 0.0))
      throw ValidationError("bounds: lambda2, lambda3, rho must be >= 0");
  }
};

/// Lower bound on the competitive ratio of any predictor with rho-accurate outputs.
inline double cr_lower_pure_ml(double m, double alpha, double rho) {
  if (!(m > 0.0 && alpha > 0.0 && rho >= 0.0))
    throw ValidationError("cr_lower_pure_ml: need m, alpha > 0 and rho >= 0");
  return 1.0 + 0.5 * (m + 2.0 * alpha) * rho;
}

/// Competitive-ratio upper bound of the calibrator for arbitrary weights.
inline double cr_upper_mla_robd(const BoundInputs& in) {
  in.validate();
  const double first = (in.m + in.lambda2 * in.beta) / (in.m * in.lambda1);
  const double second = 1.0 + in.beta * in.beta / in.alpha * in.lambda1 /
                                   ((in.lambda2 + in.lambda3) * in.beta + in.m);
  return std::max(first, second) + in.lambda3 * in.beta / (2.0 * in.lambda1) * in.rho;
}

/// The same bound with lambda2 set optimally; depends on the weights only through theta.
inline double cr_upper_optimal(double m, double alpha, double beta, double theta, double rho) {
  if (!(m > 0.0 && alpha > 0.0 && beta > 0.0 && theta >= 0.0 && rho >= 0.0))
    throw ValidationError("cr_upper_optimal: invalid inputs");
  const double a = 1.0 + beta / m * theta;
  const double k = 4.0 * beta * beta / (m * alpha);
  return 1.0 + 0.5 * (k / (std::sqrt(a * a + k) + a)) + 0.5 * beta * theta * rho;
}

/// Optimal R-OBD ratio, 1/2 (sqrt(1 + 4 beta^2 / (alpha m)) + 1).
inline double cr_robd(double m, double alpha, double beta) {
  return cr_upper_optimal(m, alpha, beta, 0.0, 0.0);
}

/// Prediction error at which trust theta > 0 stops beating R-OBD's bound.
inline double trust_crossing_rho(double m, double alpha, double beta, double theta) {
  if (!(theta > 0.0)) throw ValidationError("trust_crossing_rho: theta must be > 0");
  const double gain = cr_robd(m, alpha, beta) - cr_upper_optimal(m, alpha, beta, theta, 0.0);
  return gain / (0.5 * beta * theta);
}

struct RegretBoundInputs {
  double m = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double G = 0.0;      // bound on ||Q x|| over the action set
  double omega = 0.0;  // action-set diameter
  double T = 1.0;
  double L = 0.0;
  double L_rho = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  // Whether the online switching total respects the budget L.
  bool budget_satisfied = true;

  void validate() const {
    if (!(m > 0.0 && alpha > 0.0 && beta > 0.0))
      throw ValidationError("regret_upper: m, alpha, beta must be > 0");
    if (!(G >= 0.0 && omega >= 0.0 && T >= 1.0 && L >= 0.0 && L_rho >= 0.0))
      throw ValidationError("regret_upper: G, omega, L, L_rho must be >= 0 and T >= 1");
    if (!(lambda2 >= 0.0 && lambda3 >= 0.0))
      throw ValidationError("regret_upper: lambda2, lambda3 must be >= 0");
    if (!(lambda1 <= 1.0 && lambda1 >= 1.0 - m / (4.0 * beta)))
      throw ValidationError("regret_upper: lambda1 must lie in [1 - m/(4 beta), 1]");
  }
};

/// Upper bound on the L-constrained regret.
inline double regret_upper(const RegretBoundInputs& in) {
  in.validate();
  const double tracking =
      (in.lambda1 + in.m / (2.0 * in.beta)) * in.G * std::sqrt(2.0 * in.T * in.L / in.alpha);
  const double spread = in.beta * in.T * in.omega * in.omega / 2.0;
  if (in.lambda3 < in.alpha / in.beta && in.budget_satisfied) {
    return in.alpha / (in.alpha - in.lambda3 * in.beta) *
           (tracking + in.lambda2 * spread + 0.5 * in.lambda3 * in.beta * in.L_rho);
  }
  return tracking + (in.lambda2 + in.lambda3) * spread;
}

/// Predictions equal to the offline optimum except the first, displaced by
/// sqrt(rho * cost*) along `direction` (first basis vector by default). Their prediction
/// error is exactly rho.
inline std::vector<Vec> adversarial_prediction(const ProblemInstance& inst, const CostModel& model,
                                               const OracleSolution& oracle, double rho,
                                               std::optional<Vec> direction = std::nullopt,
                                               const std::optional<ActionBounds>& bounds =
                                                   std::nullopt) {
  if (!(rho >= 0.0)) throw ValidationError("adversarial_prediction: rho must be >= 0");
  if (!(oracle.cost > 0.0))
    throw ZeroOptimalCost("adversarial_prediction: oracle cost must be > 0");
  if (oracle.actions.size() != inst.horizon())
    throw DimensionError("adversarial_prediction: oracle does not match the instance");
  const auto d = model.dim();
  Vec u = direction ? *direction : Vec(Vec::Unit(d, 0));
  detail::require_dim(u, d, "adversarial_prediction(direction)");
  if (!(u.norm() > 0.0)) throw ValidationError("adversarial_prediction: zero direction");
  u.normalize();
  std::vector<Vec> preds = oracle.actions;
  preds[0] = oracle.actions[0] + std::sqrt(rho * oracle.cost) * u;
  if (bounds && !bounds->contains(preds[0]))
    throw ValidationError("adversarial_prediction: displacement leaves the action set");
  return preds;
}

/// Uniformly random unit vector of dimension d.
inline Vec random_unit_vector(Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Vec u(d);
  do {
    for (Eigen::Index i = 0; i < d; ++i) u[i] = n(rng);
  } while (u.norm() == 0.0);
  return u.normalized();
}

}  // namespace ecl2o

#endif  // ECL2O_BOUNDS_HPP
