#include <gtest/gtest.h>

#include <cmath>

#include "cohortcal/errors.hpp"
#include "cohortcal/random.hpp"

using namespace cohortcal;

TEST(RandomStream, DerivedStreamsAreReproducibleAndDistinct) {
  RandomStream a = RandomStream::derive(42, 0), b = RandomStream::derive(42, 0), c = RandomStream::derive(42, 1);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
}

TEST(RandomStream, InverseWishartMean) {
  RandomStream rng(9);
  Eigen::Matrix3d psi;
  psi << 2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.5;
  const double df = 12.0;
  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  const int n = 40000;
  for (int i = 0; i < n; ++i) sum += rng.inverse_wishart(psi, df);
  const Eigen::Matrix3d expected = psi / (df - 3 - 1);
  EXPECT_LT((sum / n - expected).cwiseAbs().maxCoeff(), 0.02);
}

TEST(RandomStream, MultivariateNormalCovariance) {
  RandomStream rng(10);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.6, 0.6, 2.0;
  const Eigen::Vector2d mu(1.0, -2.0);
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  Eigen::Matrix2d ss = Eigen::Matrix2d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = rng.multivariate_normal(mu, cov);
    s += x;
    ss += (x - mu) * (x - mu).transpose();
  }
  EXPECT_LT((s / n - mu).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((ss / n - cov).cwiseAbs().maxCoeff(), 0.03);
  Eigen::Matrix2d bad;
  bad << 1, 2, 2, 1;
  EXPECT_THROW(rng.multivariate_normal(mu, bad), ValidationError);
}

TEST(RandomStream, DirichletAndMultinomial) {
  RandomStream rng(12);
  const std::vector<double> alpha{1.0, 2.0, 3.0};
  std::vector<double> mean(3, 0.0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto x = rng.dirichlet(alpha);
    EXPECT_NEAR(x[0] + x[1] + x[2], 1.0, 1e-12);
    for (int j = 0; j < 3; ++j) mean[j] += x[j] / n;
  }
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(mean[j], alpha[j] / 6.0, 0.01);
  const auto counts = rng.multinomial(1000, {0.2, 0.0, 0.8});
  EXPECT_EQ(counts[0] + counts[1] + counts[2], 1000.0);
  EXPECT_EQ(counts[1], 0.0);
}
