#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ecl2o/ecl2o.hpp"
#include "test_support.hpp"

using namespace ecl2o;

namespace {

double bisect_root(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

BoundInputs inputs(double l1, double l2, double l3, double rho) {
  BoundInputs in;
  in.m = 1.0;
  in.alpha = 10.0;
  in.beta = 10.0;
  in.lambda1 = l1;
  in.lambda2 = l2;
  in.lambda3 = l3;
  in.rho = rho;
  return in;
}

}  // namespace

TEST(LowerBound, Examples) {
  EXPECT_EQ(cr_lower_pure_ml(1.0, 10.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(cr_lower_pure_ml(1.0, 10.0, 1.0), 11.5);
  for (double r = 0.0; r < 3.0; r += 0.25)
    EXPECT_NEAR(cr_lower_pure_ml(1.0, 10.0, r + 0.25) - cr_lower_pure_ml(1.0, 10.0, r),
                0.25 * 21.0 / 2.0, 1e-12);
  EXPECT_THROW(cr_lower_pure_ml(0.0, 10.0, 1.0), ValidationError);
}

TEST(UpperBound, RobdOptimumAndBranchEquality) {
  const double expected = 0.5 * (std::sqrt(41.0) + 1.0);
  EXPECT_NEAR(expected, 3.70156, 1e-5);
  const double l2 = optimal_lambda2(1.0, 10.0, 10.0, 1.0, 0.0);
  const auto in = inputs(1.0, l2, 0.0, 0.0);
  const double first = (1.0 + l2 * 10.0) / 1.0;
  const double second = 1.0 + 100.0 / 10.0 / (l2 * 10.0 + 1.0);
  EXPECT_NEAR(first, second, 1e-12);
  EXPECT_NEAR(cr_upper_mla_robd(in), expected, 1e-12);
  EXPECT_NEAR(cr_upper_optimal(1.0, 10.0, 10.0, 0.0, 0.0), expected, 1e-12);
  EXPECT_NEAR(cr_robd(1.0, 10.0, 10.0), expected, 1e-12);
  // rho is irrelevant without trust
  EXPECT_EQ(cr_upper_mla_robd(inputs(1.0, l2, 0.0, 7.0)), cr_upper_mla_robd(in));
}

TEST(UpperBound, FirstBranchLinearInLambda2) {
  // With lambda3 = 0 and large lambda2 the first branch dominates: slope beta / m.
  const double a = cr_upper_mla_robd(inputs(1.0, 2.0, 0.0, 0.0));
  const double b = cr_upper_mla_robd(inputs(1.0, 3.0, 0.0, 0.0));
  EXPECT_NEAR(b - a, 10.0, 1e-12);
}

TEST(UpperBound, OptimalFormMatchesGeneralFormAtOptimalLambda2) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const double m = 0.2 + 3.0 * u(rng);
    const double alpha = 0.5 + 10.0 * u(rng);
    const double beta = alpha * (1.0 + 4.0 * u(rng));
    const double theta = rep % 10 == 0 ? 0.0 : 5.0 * u(rng) * u(rng);
    const double rho = 2.0 * u(rng);
    const double l2 = optimal_lambda2(m, alpha, beta, 1.0, theta);
    BoundInputs in{m, alpha, beta, 1.0, l2, theta, rho};
    const double general = cr_upper_mla_robd(in);
    const double opt = cr_upper_optimal(m, alpha, beta, theta, rho);
    EXPECT_NEAR(general, opt, 1e-10 * std::max(1.0, opt));
    EXPECT_GE(opt, 1.0);
  }
}

TEST(UpperBound, DecreasingInTrustWithoutError) {
  double prev = cr_upper_optimal(1.0, 10.0, 10.0, 0.0, 0.0);
  for (double th = 0.05; th <= 20.0; th += 0.05) {
    const double cur = cr_upper_optimal(1.0, 10.0, 10.0, th, 0.0);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
  EXPECT_GT(prev, 1.0);
  // Unbounded in theta once rho > 0.
  EXPECT_GT(cr_upper_optimal(1.0, 10.0, 10.0, 1e6, 0.1), 1e5);
}

TEST(UpperBound, CrossingAgainstRobd) {
  const double robd = cr_robd(1.0, 10.0, 10.0);
  for (double th : {0.1, 0.5, 1.0, 3.0}) {
    auto gap = [&](double r) { return cr_upper_optimal(1.0, 10.0, 10.0, th, r) - robd; };
    EXPECT_LT(gap(0.0), 0.0);
    EXPECT_GT(gap(10.0), 0.0);
    const double root = bisect_root(gap, 0.0, 10.0);
    EXPECT_GT(root, 0.0);
    EXPECT_NEAR(trust_crossing_rho(1.0, 10.0, 10.0, th), root, 1e-10);
    EXPECT_LT(gap(0.99 * root), 0.0);
    EXPECT_GT(gap(1.01 * root), 0.0);
  }
  EXPECT_THROW(trust_crossing_rho(1.0, 10.0, 10.0, 0.0), ValidationError);
}

TEST(UpperBound, CalibrationBeatsRawPredictionsForLargeError) {
  for (double rho : {1.0, 2.0, 5.0, 20.0})
    EXPECT_LT(cr_upper_optimal(1.0, 10.0, 10.0, 0.1, rho), cr_lower_pure_ml(1.0, 10.0, rho));
}

TEST(Regret, Branches) {
  RegretBoundInputs in;
  in.m = 1.0;
  in.alpha = 10.0;
  in.beta = 10.0;
  in.G = 5.0;
  in.omega = 2.0;
  in.T = 24.0;
  in.L = 3.0;
  in.L_rho = 1.5;
  in.lambda1 = 1.0;

  // No trust and no regularizer: the sublinear tracking term alone.
  EXPECT_NEAR(regret_upper(in), 1.05 * 5.0 * std::sqrt(14.4), 1e-12);
  auto zero = in;
  zero.L = 0.0;
  EXPECT_EQ(regret_upper(zero), 0.0);

  in.lambda2 = 0.2;
  in.lambda3 = 0.5;
  EXPECT_NEAR(regret_upper(in), 239.34469851812156, 1e-9);
  in.budget_satisfied = false;
  EXPECT_NEAR(regret_upper(in), 355.9223492590608, 1e-9);
  in.budget_satisfied = true;
  in.lambda3 = 1.0;  // not below alpha / beta
  EXPECT_NEAR(regret_upper(in), 1.05 * 5.0 * std::sqrt(14.4) + 1.2 * 10.0 * 24.0 * 4.0 / 2.0,
              1e-9);

  in.lambda1 = 1.0 - 1.0 / 40.0 - 1e-9;
  EXPECT_THROW(regret_upper(in), ValidationError);
  in.lambda1 = 1.0 - 1.0 / 40.0;
  EXPECT_NO_THROW(regret_upper(in));
}

TEST(Adversarial, RoundTripAndLowerBound) {
  const auto model = CostModel::tracking(10.0);
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = testsupport::random_instance(12, 1, rng, 1.0);
    const auto oracle = offline_optimal(inst, model);
    if (!(oracle.cost > 1e-6)) continue;
    EXPECT_EQ(adversarial_prediction(inst, model, oracle, 0.0), oracle.actions);
    const double rho = 3.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto preds = adversarial_prediction(inst, model, oracle, rho);
    EXPECT_NEAR(prediction_error_rho(preds, oracle), rho, 1e-9);
    const double ratio = total_cost(run_actions(inst, model, preds)) / oracle.cost;
    EXPECT_GE(ratio, cr_lower_pure_ml(model.m(), model.alpha(), rho) - 1e-9);
  }
}

TEST(Adversarial, RandomDirectionsInHigherDimension) {
  const auto model = CostModel::tracking(4.0, 3);
  std::mt19937_64 rng(6);
  const auto inst = testsupport::random_instance(8, 3, rng, 1.0);
  const auto oracle = offline_optimal(inst, model);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vec u = random_unit_vector(3, s);
    EXPECT_NEAR(u.norm(), 1.0, 1e-14);
    const auto preds = adversarial_prediction(inst, model, oracle, 0.7, u);
    EXPECT_NEAR(prediction_error_rho(preds, oracle), 0.7, 1e-9);
  }
  EXPECT_THROW(adversarial_prediction(inst, model, oracle, 0.5, Vec::Zero(3)), ValidationError);
  const auto box = ActionBounds::uniform(3, -0.01, 0.01);
  EXPECT_THROW(adversarial_prediction(inst, model, oracle, 100.0, std::nullopt, box),
               ValidationError);
}
