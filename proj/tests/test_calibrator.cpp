#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ecl2o/calibrator.hpp"
#include "test_support.hpp"

using namespace ecl2o;
using testsupport::golden_min;
using testsupport::grid_then_golden;
using testsupport::random_spd;
using testsupport::random_vec;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

/// Independent 1-D objective of one calibrated step with quadratic tracking and Q = q.
double step_objective(double q, const CalibratorParams& p, double y, double xp, double v,
                      double xt, double x) {
  return 0.5 * (x - y) * (x - y) + q * (p.lambda1 * (x - xp) * (x - xp) +
                                         p.lambda2 * (x - v) * (x - v) +
                                         p.lambda3 * (x - xt) * (x - xt));
}

/// The worst-case-ratio expression the trust-optimal lambda2 minimizes (rho-free part).
double ratio_branches(double m, double a, double b, double l1, double l2, double l3) {
  return std::max((m + l2 * b) / (m * l1), 1.0 + b * b / a * l1 / ((l2 + l3) * b + m));
}

}  // namespace

TEST(HittingMinimizer, Examples) {
  const auto model = CostModel::tracking(10.0);
  EXPECT_DOUBLE_EQ(hitting_minimizer(model, v1(3.0))[0], 3.0);
  CustomHitting sq{[](const Vec& x, const Vec& y) { return (x - y).squaredNorm(); },
                   [](const Vec& x, const Vec& y) -> Vec { return 2.0 * (x - y); },
                   [](const Vec& x, const Vec&) -> Mat {
                     return 2.0 * Mat::Identity(x.size(), x.size());
                   }};
  CostModel custom{HittingCost::custom(sq, 2.0), SwitchingCost::scalar(5.0)};
  EXPECT_NEAR(hitting_minimizer(custom, v1(-1.5))[0], -1.5, 1e-12);
}

TEST(HittingMinimizer, RandomQuadraticMatchesGrid) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 4.0), ub(-3.0, 3.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double h = u(rng), b = ub(rng);
    // f(x) = 1/2 h x^2 - b x + const, minimized at b / h.
    CustomHitting q{[=](const Vec& x, const Vec&) { return 0.5 * h * x[0] * x[0] - b * x[0] + 10.0; },
                    [=](const Vec& x, const Vec&) -> Vec { return v1(h * x[0] - b); },
                    [=](const Vec&, const Vec&) -> Mat { return Mat::Constant(1, 1, h); }};
    CostModel model{HittingCost::custom(q, h), SwitchingCost::scalar(1.0)};
    const double x = hitting_minimizer(model, v1(0.0))[0];
    EXPECT_NEAR(x, b / h, 1e-9);
    double best = -10.0, fbest = 1e300;
    for (int i = 0; i <= 200000; ++i) {
      const double g = -10.0 + 20.0 * i / 200000;
      const double fv = 0.5 * h * g * g - b * g;
      if (fv < fbest) {
        fbest = fv;
        best = g;
      }
    }
    EXPECT_NEAR(x, best, 1e-4);
  }
}

TEST(CalibrateStep, Examples) {
  const auto model = CostModel::tracking(10.0);
  EXPECT_EQ(calibrate_step(model, {1.0, 0.3, 0.7}, v1(0.0), v1(0.0), v1(0.0))[0], 0.0);

  const CalibratorParams robdish{1.0, 0.2702, 0.0};
  const double x = calibrate_step(model, robdish, v1(1.0), v1(0.0), v1(0.0), v1(1.0))[0];
  EXPECT_NEAR(x, 0.27018, 1e-5);
  const double grid = grid_then_golden(
      [&](double z) { return step_objective(5.0, robdish, 1.0, 0.0, 1.0, 0.0, z); }, -1.0, 2.0);
  EXPECT_NEAR(x, grid, 1e-6);

  const double ftp = calibrate_step(model, {1.0, 0.0, 1.0}, v1(1.0), v1(0.0), v1(1.0))[0];
  EXPECT_NEAR(ftp, 11.0 / 21.0, 1e-15);
}

TEST(CalibrateStep, FirstOrderConditionAndConvexCombination) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lam(0.0, 3.0), l1(0.05, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::Index d = 1 + rep % 3;
    CostModel model{HittingCost::quadratic_tracking(),
                    SwitchingCost(random_spd(d, rng, 0.2, 6.0))};
    const CalibratorParams p{l1(rng), lam(rng), lam(rng)};
    const Vec y = random_vec(d, rng), xp = random_vec(d, rng), xt = random_vec(d, rng);
    const Vec x = calibrate_step(model, p, y, xp, xt);
    EXPECT_LE(calibration_gradient(model, p, y, xp, y, xt, x).norm(), 1e-8);
  }
  // d = 1: x is a convex combination of y (= v), x_prev and x_tilde.
  const auto model = CostModel::tracking(10.0);
  for (int rep = 0; rep < 100; ++rep) {
    const CalibratorParams p{l1(rng), lam(rng), lam(rng)};
    const double q = 5.0, den = 1.0 + 2.0 * q * p.weight_sum();
    const double cy = (1.0 + 2.0 * q * p.lambda2) / den, cp = 2.0 * q * p.lambda1 / den,
                 ct = 2.0 * q * p.lambda3 / den;
    EXPECT_NEAR(cy + cp + ct, 1.0, 1e-14);
    const double y = lam(rng) - 1.5, xp = lam(rng) - 1.5, xt = lam(rng) - 1.5;
    EXPECT_NEAR(calibrate_step(model, p, v1(y), v1(xp), v1(xt))[0], cy * y + cp * xp + ct * xt,
                1e-13);
  }
}

TEST(CalibrateStep, LargeTrustConvergesToPrediction) {
  std::mt19937_64 rng(23);
  const auto model = CostModel::tracking(10.0, 2);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec y = random_vec(2, rng), xp = random_vec(2, rng), xt = random_vec(2, rng);
    double last = 1e300;
    for (double l3 : {0.0, 0.5, 1.0, 4.0, 16.0, 64.0, 256.0, 1e4}) {
      const double dist = (calibrate_step(model, {1.0, 0.27, l3}, y, xp, xt) - xt).norm();
      EXPECT_LE(dist, last + 1e-15);
      last = dist;
    }
    EXPECT_LT(last, 1e-3);
  }
}

TEST(CalibrateStep, CustomCostMatchesBruteForce) {
  // f(x, y) = 1/2 (x - y)^2 + 1/4 (x - y)^4 is 1-strongly convex.
  CustomHitting quartic{
      [](const Vec& x, const Vec& y) {
        const double e = x[0] - y[0];
        return 0.5 * e * e + 0.25 * e * e * e * e;
      },
      [](const Vec& x, const Vec& y) -> Vec {
        const double e = x[0] - y[0];
        return v1(e + e * e * e);
      },
      [](const Vec& x, const Vec& y) -> Mat {
        const double e = x[0] - y[0];
        return Mat::Constant(1, 1, 1.0 + 3.0 * e * e);
      }};
  CostModel model{HittingCost::custom(quartic, 1.0), SwitchingCost::scalar(2.0)};
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0), lam(0.0, 2.0);
  for (int rep = 0; rep < 30; ++rep) {
    const CalibratorParams p{1.0, lam(rng), lam(rng)};
    const double y = u(rng), xp = u(rng), xt = u(rng);
    const Vec x = calibrate_step(model, p, v1(y), v1(xp), v1(xt));
    const double ref = golden_min(
        [&](double z) {
          const double e = z - y;
          return 0.5 * e * e + 0.25 * e * e * e * e +
                 2.0 * (p.lambda1 * (z - xp) * (z - xp) + p.lambda2 * (z - y) * (z - y) +
                        p.lambda3 * (z - xt) * (z - xt));
        },
        -5.0, 5.0);
    EXPECT_NEAR(x[0], ref, 1e-6);
  }
}

TEST(CalibrateStep, BoxConstraintMatchesClampedBruteForce) {
  const auto model = CostModel::tracking(10.0);
  const auto box = ActionBounds::uniform(1, 0.0, 0.4);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    const CalibratorParams p{1.0, 0.27, 0.5};
    const double y = u(rng), xp = u(rng), xt = u(rng);
    const double x = calibrate_step(model, p, v1(y), v1(xp), v1(xt), box)[0];
    const double ref = golden_min(
        [&](double z) { return step_objective(5.0, p, y, xp, y, xt, z); }, 0.0, 0.4);
    EXPECT_NEAR(x, ref, 1e-6);
    EXPECT_TRUE(box.contains(v1(x)));
  }
}

TEST(CalibrateStep, DimensionErrors) {
  const auto model = CostModel::tracking(10.0);
  EXPECT_THROW(calibrate_step(model, {}, v1(1.0), Vec::Zero(2), v1(0.0)), DimensionError);
  EXPECT_THROW(calibrate_step(model, {0.0, 0.0, 0.0}, v1(1.0), v1(0.0), v1(0.0)),
               ValidationError);
}

TEST(OptimalLambda2, Examples) {
  EXPECT_NEAR(optimal_lambda2(1.0, 10.0, 10.0, 1.0, 0.0), 0.05 * (std::sqrt(41.0) - 1.0), 1e-14);
  EXPECT_NEAR(optimal_lambda2(1.0, 10.0, 10.0, 1.0, 0.0), 0.27016, 1e-5);
  // Cross-check against a sweep minimizing the worst-case-ratio expression.
  for (double theta : {0.0, 0.1, 0.5, 1.0, 5.0}) {
    const double l2 = golden_min(
        [&](double z) { return ratio_branches(1.0, 10.0, 10.0, 1.0, z, theta); }, 0.0, 5.0, 1e-13);
    EXPECT_NEAR(optimal_lambda2(1.0, 10.0, 10.0, 1.0, theta), l2, 1e-6) << "theta " << theta;
  }
}

TEST(OptimalLambda2, NonNegativeAtUnitLambda1AndDecreasingInTheta) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 20.0);
  for (int rep = 0; rep < 500; ++rep) {
    const double m = u(rng), a = u(rng), b = a + u(rng);
    EXPECT_GE(optimal_lambda2(m, a, b, 1.0, u(rng)), 0.0);
  }
  double last = 1e300;
  for (double theta = 0.0; theta <= 1e4; theta = theta * 2.0 + 0.01) {
    const double l2 = optimal_lambda2(1.0, 10.0, 10.0, 1.0, theta);
    EXPECT_LE(l2, last);
    EXPECT_TRUE(std::isfinite(l2));
    last = l2;
  }
  // The large-theta limit: sqrt term minus linear term tends to 0, leaving m/(2 beta) * 0 = 0.
  EXPECT_NEAR(optimal_lambda2(1.0, 10.0, 10.0, 1.0, 1e9), 0.0, 1e-8);
}

TEST(OptimalLambda2, SmallLambda1IsRejected) {
  EXPECT_THROW(optimal_lambda2(1.0, 10.0, 10.0, 0.3, 5.0), NegativeLambda2);
  EXPECT_THROW(optimal_lambda2(1.0, 10.0, 10.0, 0.0, 0.0), ValidationError);
  EXPECT_THROW(optimal_lambda2(1.0, 10.0, 10.0, 1.0, -1.0), ValidationError);
}

TEST(ParamsForTrust, Derivation) {
  const auto model = CostModel::tracking(10.0);
  const auto p = params_for_trust(model, 0.5);
  EXPECT_DOUBLE_EQ(p.lambda1, 1.0);
  EXPECT_DOUBLE_EQ(p.lambda3, 0.5);
  EXPECT_DOUBLE_EQ(p.theta(), 0.5);
  EXPECT_DOUBLE_EQ(p.lambda2, optimal_lambda2(1.0, 10.0, 10.0, 1.0, 0.5));
  const auto r = robd_params(model);
  EXPECT_DOUBLE_EQ(r.lambda3, 0.0);
  EXPECT_NEAR(r.lambda2, 0.27016, 1e-5);
}

TEST(StepJacobians, Examples) {
  const auto model = CostModel::tracking(10.0);
  const Vec x = calibrate_step(model, {1.0, 0.0, 1.0}, v1(1.0), v1(0.0), v1(1.0));
  const auto J = step_jacobians(model, {1.0, 0.0, 1.0}, v1(1.0), v1(0.0), v1(1.0), x);
  EXPECT_NEAR(J.pred(0, 0), 10.0 / 21.0, 1e-15);
  EXPECT_NEAR(J.prev(0, 0), 10.0 / 21.0, 1e-15);
  const auto J0 = step_jacobians(model, {1.0, 0.3, 0.0}, v1(1.0), v1(0.0), v1(1.0), x);
  EXPECT_EQ(J0.pred(0, 0), 0.0);
}

TEST(StepJacobians, MatchFiniteDifferencesD3) {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> lam(0.05, 2.0);
  const double h = 1e-6;
  for (int rep = 0; rep < 30; ++rep) {
    CostModel model{HittingCost::quadratic_tracking(), SwitchingCost(random_spd(3, rng, 0.3, 5.0))};
    const CalibratorParams p{std::min(1.0, lam(rng)), lam(rng), lam(rng)};
    const Vec y = random_vec(3, rng), xp = random_vec(3, rng), xt = random_vec(3, rng);
    const Vec x = calibrate_step(model, p, y, xp, xt);
    const auto J = step_jacobians(model, p, y, xp, xt, x);
    Mat fd_pred(3, 3), fd_prev(3, 3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      Vec e = Vec::Zero(3);
      e[j] = h;
      fd_pred.col(j) = (calibrate_step(model, p, y, xp, xt + e) -
                        calibrate_step(model, p, y, xp, xt - e)) / (2 * h);
      fd_prev.col(j) = (calibrate_step(model, p, y, xp + e, xt) -
                        calibrate_step(model, p, y, xp - e, xt)) / (2 * h);
    }
    EXPECT_LT((fd_pred - J.pred).norm() / std::max(1e-12, J.pred.norm()), 1e-5);
    EXPECT_LT((fd_prev - J.prev).norm() / std::max(1e-12, J.prev.norm()), 1e-5);
  }
}

TEST(ActionBounds, Basics) {
  const auto box = ActionBounds::uniform(2, -1.0, 1.0);
  Vec x(2);
  x << 2.0, -0.5;
  EXPECT_FALSE(box.contains(x));
  EXPECT_TRUE(box.contains(box.project(x)));
  EXPECT_FALSE(box.interior(box.project(x)));
  EXPECT_TRUE(box.interior(Vec::Zero(2)));
  EXPECT_THROW(ActionBounds::uniform(1, 1.0, 0.0), ValidationError);
}
