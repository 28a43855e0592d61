#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cohortcal/errors.hpp"
#include "cohortcal/sampler.hpp"

using namespace cohortcal;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Block block(std::string name, std::vector<Eigen::Index> idx, double var, bool free = false) {
  const auto d = static_cast<Eigen::Index>(idx.size());
  return {std::move(name), std::move(idx), var * Eigen::MatrixXd::Identity(d, d), 1.0, free};
}

ChainState start(LogTarget& t, Eigen::VectorXd x) {
  ChainState s{x, t.evaluate(x)};
  return s;
}

std::vector<std::vector<double>> ar1_chains(int m, int n, double rho, RandomStream& rng) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m));
  for (auto& c : out) {
    double x = rng.normal() / std::sqrt(1 - rho * rho);
    for (int i = 0; i < n; ++i) {
      x = rho * x + rng.normal();
      c.push_back(x);
    }
  }
  return out;
}

Eigen::MatrixXd test_covariance() {
  Eigen::MatrixXd A(5, 5);
  A << 1.0, 0.3, 0.0, 0.1, 0.0,  //
      0.3, 2.0, 0.4, 0.0, 0.0,   //
      0.0, 0.4, 0.5, 0.0, 0.1,   //
      0.1, 0.0, 0.0, 1.5, -0.6,  //
      0.0, 0.0, 0.1, -0.6, 1.0;
  return A;
}

}  // namespace

TEST(Metropolis, UphillProposalsAlwaysAccepted) {
  FunctionTarget t(1, [](const Eigen::VectorXd& x) { return x.squaredNorm(); });
  RandomStream rng(1);
  const JumpKernel k = JumpKernel::from(block("a", {0}, 1.0));
  for (int i = 0; i < 200; ++i) {
    ChainState s = start(t, Eigen::VectorXd::Zero(1));
    EXPECT_TRUE(metropolis_step(s, k, t, rng).accepted);
  }
}

TEST(Metropolis, UniformBoxInteriorAccepted) {
  FunctionTarget t(
      2, [](const Eigen::VectorXd&) { return 0.0; },
      [](const Eigen::VectorXd& x) { return (x.array() > 0).all() && (x.array() < 1).all() ? 0.0 : kNegInf; });
  RandomStream rng(2);
  const JumpKernel k = JumpKernel::from(block("a", {0, 1}, 1e-6));
  ChainState s = start(t, Eigen::Vector2d(0.5, 0.5));
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(metropolis_step(s, k, t, rng).accepted);
}

TEST(Metropolis, StandardNormalMoments) {
  FunctionTarget t(1, [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); });
  RandomStream rng(3);
  const JumpKernel k = JumpKernel::from(block("a", {0}, 2.4 * 2.4));
  ChainState s = start(t, Eigen::VectorXd::Zero(1));
  double sum = 0, sum2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    metropolis_step(s, k, t, rng);
    sum += s.theta[0];
    sum2 += s.theta[0] * s.theta[0];
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sum2 / n - mean * mean, 1.0, 0.05);
}

TEST(Metropolis, SolveErrorIsRejection) {
  FunctionTarget t(1, [](const Eigen::VectorXd& x) -> double {
    if (x[0] > 0.5) throw SolveError("no");
    return 0.0;
  });
  RandomStream rng(4);
  const JumpKernel k = JumpKernel::from(block("a", {0}, 1.0));
  ChainState s = start(t, Eigen::VectorXd::Zero(1));
  int failed = 0;
  for (int i = 0; i < 500; ++i) {
    const auto o = metropolis_step(s, k, t, rng);
    failed += o.failed;
    EXPECT_LE(s.theta[0], 0.5);
  }
  EXPECT_GT(failed, 10);
}

TEST(Metropolis, DiscreteThreeStateStationaryDistribution) {
  const double p[3] = {0.2, 0.3, 0.5};
  FunctionTarget t(
      1, [&](const Eigen::VectorXd& x) { return std::log(p[static_cast<int>(std::floor(x[0]))]); },
      [](const Eigen::VectorXd& x) { return x[0] >= 0 && x[0] < 3 ? 0.0 : kNegInf; });
  RandomStream rng(5);
  const JumpKernel k = JumpKernel::from(block("a", {0}, 1.5 * 1.5));
  ChainState s = start(t, Eigen::VectorXd::Constant(1, 1.5));
  double counts[3] = {0, 0, 0};
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    metropolis_step(s, k, t, rng);
    counts[static_cast<int>(std::floor(s.theta[0]))] += 1;
  }
  double tv = 0;
  for (int j = 0; j < 3; ++j) tv += 0.5 * std::abs(counts[j] / n - p[j]);
  EXPECT_LT(tv, 0.02);
}

TEST(Gibbs, ProductTargetMarginals) {
  // x0 ~ N(1, 1), (x1, x2) ~ N(0, diag(4, 0.25))
  FunctionTarget t(3, [](const Eigen::VectorXd& x) {
    return -0.5 * ((x[0] - 1) * (x[0] - 1) + x[1] * x[1] / 4 + x[2] * x[2] / 0.25);
  });
  const std::vector<JumpKernel> k{JumpKernel::from(block("a", {0}, 5.76)),
                                  JumpKernel::from({"b", {1, 2}, Eigen::Vector2d(4, 0.25).asDiagonal(), 2.88, false})};
  RandomStream rng(6);
  ChainState s = start(t, Eigen::Vector3d::Zero());
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sum2 = Eigen::Vector3d::Zero();
  const int n = 100000;
  std::vector<long> acc(2, 0);
  for (int i = 0; i < n; ++i) {
    gibbs_sweep(s, k, t, rng, acc);
    sum += s.theta;
    sum2 += s.theta.cwiseProduct(s.theta);
  }
  const Eigen::Vector3d mean = sum / n;
  const Eigen::Vector3d var = sum2 / n - mean.cwiseProduct(mean);
  EXPECT_NEAR(mean[0], 1.0, 0.03);
  EXPECT_NEAR(mean[1], 0.0, 0.06);
  EXPECT_NEAR(var[0], 1.0, 0.05);
  EXPECT_NEAR(var[1], 4.0, 0.2);
  EXPECT_NEAR(var[2], 0.25, 0.0125);
  EXPECT_GT(acc[0], 0);
}

TEST(Gibbs, LikelihoodFreeBlockSkipsLikelihood) {
  FunctionTarget t(
      2, [](const Eigen::VectorXd& x) { return -0.5 * x[0] * x[0]; },
      [](const Eigen::VectorXd& x) { return -0.5 * x[1] * x[1]; });
  ChainState s = start(t, Eigen::Vector2d::Zero());
  const long before = t.likelihood_calls();
  const std::vector<JumpKernel> k{JumpKernel::from(block("nuisance", {1}, 1.0, true))};
  RandomStream rng(7);
  for (int i = 0; i < 1000; ++i) gibbs_sweep(s, k, t, rng);
  EXPECT_EQ(t.likelihood_calls(), before);
}

TEST(Blocks, MustPartition) {
  const std::vector<Block> ok{block("a", {0, 2}, 1.0), block("b", {1}, 1.0)};
  EXPECT_NO_THROW(validate_blocks(ok, 3));
  const std::vector<Block> overlap{block("a", {0, 1}, 1.0), block("b", {1, 2}, 1.0)};
  EXPECT_THROW(validate_blocks(overlap, 3), ValidationError);
  const std::vector<Block> missing{block("a", {0}, 1.0)};
  EXPECT_THROW(validate_blocks(missing, 2), ValidationError);
}

TEST(Diagnostics, RhatCases) {
  RandomStream rng(8);
  std::vector<std::vector<double>> iid(4);
  for (auto& c : iid)
    for (int i = 0; i < 10000; ++i) c.push_back(rng.normal());
  const double r = rhat(iid);
  EXPECT_GE(r, 0.99);
  EXPECT_LE(r, 1.01);
  EXPECT_TRUE(std::isinf(rhat({{1, 1, 1, 1}, {1, 1, 1, 1}})));
  std::vector<std::vector<double>> apart(2);
  for (int i = 0; i < 1000; ++i) {
    apart[0].push_back(1e-3 * rng.normal());
    apart[1].push_back(10 + 1e-3 * rng.normal());
  }
  EXPECT_GT(rhat(apart), 100.0);
  EXPECT_THROW(rhat({{1, 2, 3, 4}}), ValidationError);
  EXPECT_THROW(rhat({{1, 2, 3}, {1, 2, 3}}), ValidationError);
}

TEST(Diagnostics, EssCases) {
  RandomStream rng(9);
  std::vector<std::vector<double>> iid(4);
  for (auto& c : iid)
    for (int i = 0; i < 5000; ++i) c.push_back(rng.normal());
  EXPECT_NEAR(ess_mcmc(iid) / 20000.0, 1.0, 0.15);
  const auto ar = ar1_chains(4, 50000, 0.9, rng);
  const double expected = 200000.0 * 0.1 / 1.9;
  EXPECT_NEAR(ess_mcmc(ar) / expected, 1.0, 0.3);
  EXPECT_EQ(ess_mcmc({std::vector<double>(20, 2.0), std::vector<double>(20, 2.0)}), 0.0);
}

TEST(Cull, EvenlySpaced) {
  const auto id = cull_indices(40, 40);
  for (long i = 0; i < 40; ++i) EXPECT_EQ(id[static_cast<std::size_t>(i)], i);
  const auto sp = cull_indices(400, 40);
  EXPECT_EQ(sp.front(), 0);
  EXPECT_EQ(sp.back(), 399);
  for (std::size_t i = 1; i < sp.size(); ++i) EXPECT_NEAR(sp[i] - sp[i - 1], 399.0 / 39.0, 1.0);
  EXPECT_THROW(cull_indices(39, 40), ValidationError);
}

TEST(OverdispersedInit, Moments) {
  RandomStream rng(10);
  const Eigen::Vector2d c(1.0, -1.0);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.4, 0.4, 0.5;
  EXPECT_EQ(overdispersed_init(c, cov, 0.0, rng), c);
  const int n = 10000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();
  std::vector<Eigen::Vector2d> xs;
  for (int i = 0; i < n; ++i) {
    xs.push_back(overdispersed_init(c, cov, 5.0, rng));
    sum += xs.back();
  }
  const Eigen::Vector2d mean = sum / n;
  for (const auto& x : xs) outer += (x - mean) * (x - mean).transpose();
  const Eigen::Matrix2d emp = outer / (n - 1);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(emp(i, i) / (5 * cov(i, i)), 1.0, 0.1);
    EXPECT_NEAR(mean[i], c[i], 3 * std::sqrt(5 * cov(i, i) / n));
  }
  Eigen::Matrix2d bad;
  bad << 1, 2, 2, 1;
  EXPECT_THROW(overdispersed_init(c, bad, 5.0, rng), ValidationError);
}

TEST(Adaptation, PsiRecursionStabilisesInverseWishartMean) {
  RandomStream rng(11);
  Eigen::Matrix2d S;
  S << 2.0, 0.5, 0.5, 1.0;
  const double mdn = 50;
  Eigen::Matrix2d psi = Eigen::Matrix2d::Zero();
  for (int k = 1; k <= 40; ++k) psi += mdn * S;
  EXPECT_LT((psi - 40 * mdn * S).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::Matrix2d mean = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 2000; ++i) mean += rng.inverse_wishart(psi, 40 * mdn) / 2000;
  EXPECT_LT((mean - S).cwiseAbs().maxCoeff(), 0.02);
}

class SamplerRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cov_ = test_covariance();
    mean_ = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    const Eigen::MatrixXd prec = cov_.inverse();
    target_ = std::make_unique<FunctionTarget>(5, [prec](const Eigen::VectorXd& x) {
      const Eigen::VectorXd d = x - mean_;
      return -0.5 * d.dot(prec * d);
    });
    blocks_ = {block("a", {0, 1, 2}, 1.0), block("b", {3, 4}, 1.0)};
    config_.seed = 99;
    config_.ess_target = 1000;
    config_.ess_check_every = 500;
    RandomStream rng(12);
    for (int c = 0; c < config_.chains; ++c)
      starts_.push_back(overdispersed_init(mean_, cov_, config_.overdispersion, rng));
    result_ = std::make_unique<ChainSet>(run_sampler(*target_, blocks_, starts_, config_));
  }
  static void TearDownTestSuite() {
    result_.reset();
    target_.reset();
  }

  static inline Eigen::MatrixXd cov_;
  static inline Eigen::VectorXd mean_;
  static inline std::unique_ptr<FunctionTarget> target_;
  static inline std::vector<Block> blocks_;
  static inline std::vector<Eigen::VectorXd> starts_;
  static inline SamplerConfig config_;
  static inline std::unique_ptr<ChainSet> result_;
};

TEST_F(SamplerRun, MomentsWithinMonteCarloError) {
  const ChainSet& r = *result_;
  EXPECT_GE(r.diagnostics.min_ess(), 1000.0);
  EXPECT_LT(r.diagnostics.max_rhat(), 1.3);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto x = r.component(i, r.burn_in, r.length());
    double sum = 0, n = 0;
    for (const auto& c : x)
      for (double v : c) sum += v, n += 1;
    const double se = std::sqrt(cov_(i, i) / r.diagnostics.ess[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(sum / n, mean_[i], 3 * se) << "component " << i;
  }
}

TEST_F(SamplerRun, AdaptedCovarianceWithinFactorTwo) {
  for (const Block& b : result_->final_blocks) {
    const auto d = static_cast<Eigen::Index>(b.indices.size());
    Eigen::MatrixXd truth(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) truth(i, j) = cov_(b.indices[i], b.indices[j]);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(b.covariance, truth);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.5) << b.name;
    EXPECT_LT(eig.eigenvalues().maxCoeff(), 2.0) << b.name;
  }
}

TEST_F(SamplerRun, StructuralDefaults) {
  const SamplerConfig def;
  EXPECT_EQ(def.chains, 5);
  EXPECT_EQ(def.sub_interval, 10);
  EXPECT_EQ(def.tail_intervals, 80);
  EXPECT_EQ(def.overdispersion, 5.0);
  EXPECT_EQ(def.cull_per_chain, 40);
  EXPECT_EQ(def.ess_target, 50.0);
  EXPECT_NEAR(result_->adaptation[0].beta[0], 2.4 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(result_->adaptation[0].beta[1], 2.4 / std::sqrt(2.0), 1e-15);
  // Psi_1 = m Delta_n S_0
  EXPECT_LT((result_->adaptation[0].psi[0] - 50.0 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  const auto sample = cull(*result_, 40);
  EXPECT_EQ(sample.size(), 200u);
  EXPECT_EQ(result_->burn_in % 10, 0);
  EXPECT_GE(result_->burn_in, 800);
}

TEST_F(SamplerRun, BetaMovesTowardTargetRate) {
  int up_high = 0, high = 0, up_low = 0, low = 0;
  const auto& tr = result_->adaptation;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k)
    for (std::size_t b = 0; b < tr[k].beta.size(); ++b) {
      const bool up = tr[k + 1].beta[b] > tr[k].beta[b];
      if (tr[k].acceptance[b] > 0.3) ++high, up_high += up;
      if (tr[k].acceptance[b] < 0.17) ++low, up_low += up;
    }
  ASSERT_GT(high, 5);
  ASSERT_GT(low, 5);
  EXPECT_GT(static_cast<double>(up_high) / high, 0.5);
  EXPECT_LT(static_cast<double>(up_low) / low, 0.5);
}

TEST_F(SamplerRun, ReproducibleAcrossRunsAndWorkers) {
  SamplerConfig c = config_;
  c.workers = 3;
  const ChainSet again = run_sampler(*target_, blocks_, starts_, c);
  ASSERT_EQ(again.length(), result_->length());
  EXPECT_EQ(again.draws, result_->draws);
  EXPECT_EQ(again.burn_in, result_->burn_in);
}
