#include <gtest/gtest.h>

#include <cmath>

#include "cohortcal/errors.hpp"
#include "cohortcal/optimize.hpp"

using namespace cohortcal;

TEST(Gradient, CentralDifferences) {
  const Objective f = [](const Eigen::VectorXd& x) { return std::exp(x[0]) + x[0] * x[1] * x[1]; };
  const Eigen::Vector2d x(0.3, -1.2);
  const Eigen::VectorXd g = central_gradient(f, x);
  EXPECT_NEAR(g[0], std::exp(0.3) + 1.44, 1e-8);
  EXPECT_NEAR(g[1], 2 * 0.3 * -1.2, 1e-8);
}

TEST(Hessian, RichardsonMatchesAnalytic) {
  const Objective f = [](const Eigen::VectorXd& x) {
    return std::exp(x[0]) + x[0] * x[1] * x[1] + std::sin(x[1] * x[2]) + x[2] * x[2] * x[2];
  };
  const Eigen::Vector3d x(0.3, -1.2, 0.0);
  Eigen::Matrix3d H;
  const double c = std::cos(x[1] * x[2]), s = std::sin(x[1] * x[2]);
  H << std::exp(x[0]), 2 * x[1], 0,  //
      2 * x[1], 2 * x[0] - x[2] * x[2] * s, c - x[1] * x[2] * s,  //
      0, c - x[1] * x[2] * s, -x[1] * x[1] * s + 6 * x[2];
  const Eigen::MatrixXd est = richardson_hessian(f, x);
  EXPECT_LT((est - H).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_EQ(est, est.transpose());
}

TEST(SR1, SecantConditionAndSkip) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::Vector3d s(1.0, 0.5, -0.2), y(2.0, 0.1, 0.3);
  ASSERT_TRUE(sr1_update(B, s, y));
  EXPECT_LT((B * s - y).norm(), 1e-12);
  EXPECT_EQ(B, B.transpose());
  // r orthogonal to s: skipped, B unchanged and symmetric
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::Vector2d s2(1.0, 0.0), y2(1.0, 1.0);  // r = (0, 1), r's = 0
  EXPECT_FALSE(sr1_update(C, s2, y2));
  EXPECT_EQ(C, Eigen::MatrixXd::Identity(2, 2));
}

TEST(BFGS, Rosenbrock) {
  const Objective f = [](const Eigen::VectorXd& x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  const MinimizeResult r = minimize_bfgs(f, Eigen::Vector2d(-1.2, 1.0));
  EXPECT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
}

TEST(BFGS, TreatsSolveErrorAsInfinite) {
  const Objective f = [](const Eigen::VectorXd& x) {
    if (x[0] < -0.5) throw SolveError("outside");
    return (x[0] - 1) * (x[0] - 1);
  };
  const MinimizeResult r = minimize_bfgs(f, Eigen::VectorXd::Constant(1, 0.0));
  EXPECT_NEAR(r.x[0], 1.0, 1e-5);
  EXPECT_THROW(minimize_bfgs(f, Eigen::VectorXd::Constant(1, -1.0)), ValidationError);
}
