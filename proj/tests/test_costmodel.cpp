#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ecl2o/costmodel.hpp"
#include "test_support.hpp"

using namespace ecl2o;
using testsupport::random_spd;
using testsupport::random_vec;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

/// Eigenvalues of a symmetric 3x3 matrix as roots of det(Q - t I), by sign-change scanning of
/// the characteristic cubic followed by bisection.
std::vector<double> charpoly_roots_3x3(const Mat& Q) {
  auto p = [&](double t) { return (Q - t * Mat::Identity(3, 3)).determinant(); };
  const double bound = Q.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  std::vector<double> roots;
  const int n = 200000;
  double prev_t = -bound, prev_v = p(prev_t);
  for (int i = 1; i <= n; ++i) {
    const double t = -bound + 2.0 * bound * i / n;
    const double v = p(t);
    if (v == 0.0) {
      roots.push_back(t);
    } else if ((v < 0) != (prev_v < 0) && prev_v != 0.0) {
      double a = prev_t, b = t, fa = prev_v;
      for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (a + b);
        const double fm = p(mid);
        if ((fm < 0) == (fa < 0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    prev_t = t;
    prev_v = v;
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace

TEST(SwitchingCost, Examples) {
  const auto model = CostModel::tracking(10.0);
  EXPECT_DOUBLE_EQ(switching_cost(model, v1(0.7), v1(0.7)), 0.0);
  EXPECT_DOUBLE_EQ(switching_cost(model, v1(1.0), v1(0.0)), 5.0);
  EXPECT_DOUBLE_EQ(model.Q()(0, 0), 5.0);
  EXPECT_THROW(switching_cost(model, Vec::Zero(2), v1(0.0)), DimensionError);
}

TEST(SwitchingCost, NonNegativeAndZeroOnlyAtEquality) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const Mat Q = random_spd(3, rng, 0.1, 4.0);
    SwitchingCost sc(Q);
    const Vec a = random_vec(3, rng), b = random_vec(3, rng);
    EXPECT_GT(sc.value(a, b), 0.0);
    EXPECT_EQ(sc.value(a, a), 0.0);
  }
}

TEST(HittingCost, QuadraticTrackingExamples) {
  const auto model = CostModel::tracking(10.0);
  EXPECT_DOUBLE_EQ(hitting_cost(model, v1(3.0), v1(3.0)), 0.0);
  EXPECT_DOUBLE_EQ(hitting_grad(model, v1(3.0), v1(3.0))[0], 0.0);
  EXPECT_DOUBLE_EQ(hitting_cost(model, v1(2.0), v1(1.0)), 0.5);
  EXPECT_DOUBLE_EQ(hitting_grad(model, v1(2.0), v1(1.0))[0], 1.0);
  EXPECT_EQ(hitting_hessian(model, v1(2.0), v1(1.0)), Mat::Identity(1, 1));
  EXPECT_DOUBLE_EQ(model.m(), 1.0);
}

TEST(HittingCost, GradientMatchesCentralDifferences) {
  const auto model = CostModel::tracking(4.0, 3);
  std::mt19937_64 rng(21);
  const double h = 1e-6;
  for (int rep = 0; rep < 100; ++rep) {
    const Vec x = random_vec(3, rng, 2.0), y = random_vec(3, rng, 2.0);
    const Vec g = hitting_grad(model, x, y);
    for (Eigen::Index i = 0; i < 3; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (hitting_cost(model, xp, y) - hitting_cost(model, xm, y)) / (2 * h);
      EXPECT_NEAR(fd, g[i], 1e-7);
    }
  }
}

TEST(EigBounds, Examples) {
  const auto b1 = eig_bounds(Mat::Constant(1, 1, 5.0));
  EXPECT_DOUBLE_EQ(b1.alpha, 10.0);
  EXPECT_DOUBLE_EQ(b1.beta, 10.0);
  Mat D = Mat::Zero(2, 2);
  D.diagonal() << 1.0, 2.0;
  const auto b2 = eig_bounds(D);
  EXPECT_NEAR(b2.alpha, 2.0, 1e-14);
  EXPECT_NEAR(b2.beta, 4.0, 1e-14);
}

TEST(EigBounds, MatchesCharacteristicPolynomial) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat Q = random_spd(3, rng, 0.2, 5.0);
    const auto roots = charpoly_roots_3x3(Q);
    ASSERT_EQ(roots.size(), 3u);
    const auto b = eig_bounds(Q);
    EXPECT_NEAR(b.alpha, 2.0 * roots.front(), 1e-9);
    EXPECT_NEAR(b.beta, 2.0 * roots.back(), 1e-9);
  }
}

TEST(EigBounds, RejectsBadMatrices) {
  Mat neg = Mat::Identity(2, 2);
  neg(1, 1) = -1.0;
  EXPECT_THROW(eig_bounds(neg), ValidationError);
  EXPECT_THROW(eig_bounds(Mat::Zero(2, 2)), ValidationError);
  Mat asym = Mat::Identity(2, 2);
  asym(0, 1) = 0.1;
  EXPECT_THROW(eig_bounds(asym), ValidationError);
  EXPECT_THROW(eig_bounds(Mat::Zero(2, 3)), DimensionError);
  EXPECT_THROW(SwitchingCost{neg}, ValidationError);
}

TEST(EigBounds, QuadraticFormSandwich) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> dim(1, 5);
  for (int rep = 0; rep < 10000; ++rep) {
    const auto d = dim(rng);
    const Mat Q = random_spd(d, rng, 0.05, 6.0);
    const auto b = eig_bounds(Q);
    const Vec u = random_vec(d, rng);
    const double q = u.dot(Q * u);
    const double n2 = u.squaredNorm();
    const double tol = 1e-10 * std::max(1.0, q);
    EXPECT_LE(0.5 * b.alpha * n2, q + tol);
    EXPECT_GE(0.5 * b.beta * n2, q - tol);
    EXPECT_LE(b.alpha, b.beta);
  }
}

TEST(StrongConvexity, QuadraticTrackingPassesCustomChecked) {
  const auto model = CostModel::tracking(10.0, 2);
  auto sample = [](std::mt19937_64& rng) { return random_vec(2, rng, 3.0); };
  EXPECT_TRUE(check_strong_convexity(model, sample, 10000, 1));

  // (x - y)^2 per coordinate is 2-strongly convex; declaring m = 3 must be caught.
  CustomHitting sq{[](const Vec& x, const Vec& y) { return (x - y).squaredNorm(); },
                   [](const Vec& x, const Vec& y) -> Vec { return 2.0 * (x - y); },
                   [](const Vec& x, const Vec&) -> Mat {
                     return 2.0 * Mat::Identity(x.size(), x.size());
                   }};
  CostModel good{HittingCost::custom(sq, 2.0), SwitchingCost::scalar(1.0, 2)};
  EXPECT_TRUE(check_strong_convexity(good, sample, 10000, 2));
  CostModel bad{HittingCost::custom(sq, 3.0), SwitchingCost::scalar(1.0, 2)};
  EXPECT_FALSE(check_strong_convexity(bad, sample, 10000, 3));
  EXPECT_THROW(HittingCost::custom(sq, 0.0), ValidationError);
}

TEST(CostModelConfig, ScalarAndMatrixForms) {
  const auto a = cost_model_from_json(nlohmann::json::parse(
      R"({"hitting": {"kind": "quadratic_tracking"}, "switching": {"q_scalar": 5.0}})"));
  EXPECT_DOUBLE_EQ(a.alpha(), 10.0);
  EXPECT_DOUBLE_EQ(a.beta(), 10.0);
  EXPECT_EQ(a.dim(), 1);
  const auto b = cost_model_from_json(
      nlohmann::json::parse(R"({"switching": {"matrix": [[1, 0], [0, 2]]}})"));
  EXPECT_NEAR(b.alpha(), 2.0, 1e-14);
  EXPECT_NEAR(b.beta(), 4.0, 1e-14);
  const auto back = cost_model_from_json(cost_model_to_json(b));
  EXPECT_EQ(back.Q(), b.Q());
  EXPECT_THROW(cost_model_from_json(nlohmann::json::parse(R"({"switching": {}})")),
               ValidationError);
  EXPECT_THROW(cost_model_from_json(nlohmann::json::parse(R"({"hitting": {"kind": "huber"}})")),
               ValidationError);
}
