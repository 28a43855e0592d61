#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"
#include "cohortcal/splines.hpp"
#include "oracles/truncated_power_spline.hpp"

using namespace cohortcal;

namespace {
std::vector<double> all_knots(const SplineBasis& b) { return b.breakpoints(); }

double second_derivative(const SplineBasis& b, int j, double x) {
  const double d = 1e-3;
  auto f = [&](double t) { return b.eval(t)[j]; };
  return (f(x + d) - 2 * f(x) + f(x - d)) / (d * d);
}
}  // namespace

TEST(Splines, EquispacedKnots) {
  const auto k = make_equispaced_knots(0, 4, 3);
  ASSERT_EQ(k.interior.size(), 3u);
  EXPECT_DOUBLE_EQ(k.interior[0], 1.0);
  EXPECT_DOUBLE_EQ(k.interior[1], 2.0);
  EXPECT_DOUBLE_EQ(k.interior[2], 3.0);
  EXPECT_TRUE(make_equispaced_knots(1910, 1997, 0).interior.empty());
  const auto q = make_equispaced_knots(20, 100, 2);
  EXPECT_NEAR(q.interior[0], 46.666666666666667, 1e-9);
  EXPECT_NEAR(q.interior[1], 73.333333333333333, 1e-9);
  EXPECT_THROW(make_equispaced_knots(5, 5, 1), ValidationError);
  EXPECT_THROW(make_equispaced_knots(0, NAN, 1), ValidationError);
}

TEST(Splines, EmptyBasis) {
  const auto b = SplineBasis::with_df(1910, 1997, 0);
  EXPECT_EQ(b.eval(1950).size(), 0);
  SplineCoefficients c{std::log(0.3 / 0.7), Eigen::VectorXd()};
  EXPECT_NEAR(initiation_proportion(1950, c, b), 0.3, 1e-15);
}

TEST(Splines, LinearBeyondBoundary) {
  const auto b = SplineBasis::with_df(20, 100, 3);
  const std::vector<double> w{0.4, -1.2, 0.8};
  const auto f = b.bind(w);
  const double d = 1e-6;
  const double slope_hi = (f(100) - f(100 - d)) / d;
  for (double x : {101.0, 130.0}) EXPECT_NEAR(f(x), f(100) + slope_hi * (x - 100), 1e-5);
  const double slope_lo = (f(20 + d) - f(20)) / d;
  EXPECT_NEAR(f(0), f(20) - 20 * slope_lo, 1e-4);
}

TEST(Splines, NaturalBoundarySecondDerivative) {
  const auto b = SplineBasis(KnotSet{{1930, 1950, 1990}, 1910, 2000});
  for (int j = 0; j < b.df(); ++j)
    for (double d : {0.5, 5.0}) {
      EXPECT_NEAR(second_derivative(b, j, 1910 - d), 0.0, 1e-6);
      EXPECT_NEAR(second_derivative(b, j, 2000 + d), 0.0, 1e-6);
    }
}

TEST(Splines, ContinuousAtKnots) {
  const auto b = SplineBasis(KnotSet{{1.3, 2.0, 3.7}, 0, 5});
  for (double x : all_knots(b)) {
    const Eigen::VectorXd l = b.eval(std::nextafter(x, -1e9)), r = b.eval(std::nextafter(x, 1e9));
    EXPECT_LT((l - r).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Splines, MatchesTruncatedPowerOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const int df = 1 + trial % 5;
    const auto b = SplineBasis::with_df(20, 100, df);
    std::vector<double> w(df);
    for (double& x : w) x = u(rng);
    std::vector<double> values{0.0};
    values.insert(values.end(), w.begin(), w.end());
    const oracle::TruncatedPowerSpline ref(all_knots(b), values);
    const auto f = b.bind(w);
    for (int i = 0; i < 50; ++i) {
      const double x = 0 + 120 * (i + 0.37) / 50;
      const double expect = ref(x);
      EXPECT_NEAR(f(x), expect, 1e-9 * std::max(1.0, std::abs(expect)));
      EXPECT_NEAR(b.eval(x).dot(Eigen::Map<const Eigen::VectorXd>(w.data(), df)), expect,
                  1e-9 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(Splines, LinkFunctions) {
  const auto b = SplineBasis::with_df(1910, 1997, 2);
  SplineCoefficients zero{0.0, Eigen::VectorXd::Zero(2)};
  EXPECT_DOUBLE_EQ(initiation_proportion(1950, zero, b), 0.5);
  SplineCoefficients c{1.0, Eigen::Vector2d(0.5, -0.7)};
  const std::vector<double> values{0.0, 0.5, -0.7};
  const oracle::TruncatedPowerSpline ref(all_knots(b), values);
  EXPECT_NEAR(initiation_proportion(1937.3, c, b), 1.0 / (1.0 + std::exp(-(1.0 + ref(1937.3)))), 1e-12);

  const auto ab = SplineBasis::with_df(20, 100, 2), yb = SplineBasis::with_df(1930, 2017, 1);
  SplineCoefficients az{0.0, Eigen::VectorXd::Zero(2)}, yz{0.0, Eigen::VectorXd::Zero(1)};
  EXPECT_DOUBLE_EQ(quit_rate(40, 1980, az, ab, yz, yb, 0.0), 1.0);
  EXPECT_NEAR(quit_rate(40, 1980, az, ab, yz, yb, std::log(0.05)), 0.05, 1e-15);
  SplineCoefficients a1{0.0, Eigen::Vector2d(0.3, 0.9)}, y1{0.0, Eigen::VectorXd::Constant(1, 1.1)};
  const double r1 = quit_rate(30, 1950, a1, ab, y1, yb, -3) / quit_rate(30, 1990, a1, ab, y1, yb, -3);
  const double r2 = quit_rate(70, 1950, a1, ab, y1, yb, -3) / quit_rate(70, 1990, a1, ab, y1, yb, -3);
  EXPECT_NEAR(r1, r2, 1e-12);
  EXPECT_GT(quit_rate(500, -4000, a1, ab, y1, yb, 50), 0.0);
}
