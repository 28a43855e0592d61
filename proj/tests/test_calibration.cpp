#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "cohortcal/calibration.hpp"
#include "cohortcal/errors.hpp"

using namespace cohortcal;

namespace {

struct SmallProblem {
  ModelSpec spec;
  std::shared_ptr<const MortalityTable> mortality;
  std::shared_ptr<const CalibrationProblem> problem;
  ParameterVector truth;
};

const SmallProblem& small_problem() {
  static const SmallProblem sp = [] {
    SmallProblem s;
    s.spec = ModelSpec::preset("D");
    s.spec.hr_age_groups = {45, 70};
    s.mortality = std::make_shared<MortalityTable>(MortalityTable::gompertz(20, 99, 1900, 2100));
    s.truth = default_truth(s.spec, Sex::female);
    SyntheticDesign d;
    d.sexes = {Sex::female};
    d.waves = {1975, 1990, 2005};
    d.birth_years = {1935, 1945, 1955, 1965, 1975, 1983};
    d.n_per_cell = 3000;
    RandomStream rng(8);
    const auto table = generate_synthetic(s.spec, {{Sex::female, s.truth}}, *s.mortality, d, rng);
    HazardRatioPrior hr(s.spec.hr_age_groups);
    Eigen::VectorXd mean(4);
    mean << s.truth.hr_current.array().log().matrix(), s.truth.hr_former.array().log().matrix();
    hr.set(Sex::female, mean, Eigen::MatrixXd::Identity(4, 4) * 0.01);
    s.problem = make_problem(s.spec, Sex::female, table.cells, s.mortality, hr);
    return s;
  }();
  return sp;
}

const MapEstimate& small_map() {
  static const MapEstimate m = find_map(*small_problem().problem);
  return m;
}

}  // namespace

TEST(PosteriorTarget, AddsJacobianToPosterior) {
  const auto& sp = small_problem();
  PosteriorTarget target(sp.problem);
  const auto& layout = sp.problem->layout();
  ParameterVector p = sp.truth;
  p.sigma_init = 0.7;
  p.sigma_quit = 1.9;
  const Eigen::VectorXd theta = layout.to_coordinates(p);
  const TargetValue v = target.evaluate(theta);
  const double jac = std::log(0.02) + std::log(0.005) + std::log(0.7) + std::log(1.9);
  EXPECT_NEAR(v.total(), sp.problem->log_posterior(layout.from_coordinates(theta)) + jac, 1e-9);
  EXPECT_NEAR(v.likelihood, sp.problem->log_likelihood(p), 1e-9);
  EXPECT_NEAR(target.prior_term(theta), v.prior, 1e-12);

  auto copy = target.clone();
  EXPECT_EQ(copy->evaluate(theta).total(), v.total());
  Eigen::VectorXd bad = theta;
  bad(0) = std::nan("");
  EXPECT_EQ(target.log_posterior(bad), -std::numeric_limits<double>::infinity());
}

TEST(Map, StationaryWithHazardRatiosAtPriorMode) {
  const auto& sp = small_problem();
  const MapEstimate& map = small_map();
  const auto& layout = sp.problem->layout();
  EXPECT_TRUE(map.converged);
  const Eigen::VectorXd hr = sp.problem->priors().hazard.mean(Sex::female);
  EXPECT_EQ(map.theta.head(layout.hazard_size()), hr);
  for (Eigen::Index i = 0; i < layout.size(); ++i)
    EXPECT_EQ(map.fixed[static_cast<std::size_t>(i)], i < layout.hazard_size());

  PosteriorTarget target(sp.problem);
  const double at_map = target.log_posterior(map.theta);
  EXPECT_NEAR(at_map, map.log_posterior, 1e-9 * std::abs(at_map));
  EXPECT_GT(at_map, target.log_posterior(initial_coordinates(*sp.problem)));
  for (Eigen::Index i = layout.hazard_size(); i < layout.size(); ++i)
    for (double h : {-1e-3, 1e-3}) {
      Eigen::VectorXd t = map.theta;
      t(i) += h;
      EXPECT_LE(target.log_posterior(t), at_map + 1e-6) << layout.names()[i];
    }

  Eigen::LLT<Eigen::MatrixXd> llt(map.covariance);
  EXPECT_EQ(llt.info(), Eigen::Success);
  EXPECT_TRUE(map.covariance.topLeftCorner(4, 4).isApprox(Eigen::MatrixXd::Identity(4, 4) * 0.01));
}

TEST(Map, TruthInsideLooseMapRegion) {
  const auto& sp = small_problem();
  const MapEstimate& map = small_map();
  const auto& layout = sp.problem->layout();
  const Eigen::VectorXd truth = layout.to_coordinates(sp.truth);
  // sigma has no true value in the generator; skip the nuisance block
  for (Eigen::Index i = layout.model_begin(); i < layout.nuisance_begin(); ++i) {
    const double sd = std::sqrt(map.covariance(i, i));
    EXPECT_LT(std::abs(map.theta(i) - truth(i)), 6 * sd + 0.05) << layout.names()[i];
  }
}

TEST(Blocks, PartitionAndLikelihoodFreeNuisance) {
  const auto& sp = small_problem();
  const auto blocks = calibration_blocks(*sp.problem, small_map());
  ASSERT_EQ(blocks.size(), 3u);
  EXPECT_NO_THROW(validate_blocks(blocks, sp.problem->layout().size()));
  EXPECT_FALSE(blocks[0].likelihood_free);
  EXPECT_FALSE(blocks[1].likelihood_free);
  EXPECT_TRUE(blocks[2].likelihood_free);
  EXPECT_EQ(blocks[0].indices.size(), 4u);
  EXPECT_EQ(blocks[2].indices.size(), 2u);
}

TEST(Starts, FiniteDistinctAndReproducible) {
  const auto& sp = small_problem();
  SamplerConfig cfg;
  cfg.seed = 17;
  const auto a = chain_starts(*sp.problem, small_map(), cfg);
  const auto b = chain_starts(*sp.problem, small_map(), cfg);
  ASSERT_EQ(a.size(), 5u);
  PosteriorTarget target(sp.problem);
  for (std::size_t c = 0; c < a.size(); ++c) {
    EXPECT_EQ(a[c], b[c]);
    EXPECT_TRUE(std::isfinite(target.log_posterior(a[c])));
    for (std::size_t d = 0; d < c; ++d) EXPECT_NE(a[c], a[d]);
  }
}

TEST(CoordinatePrior, ProperOnlyWhereStated) {
  const auto& sp = small_problem();
  const auto& layout = sp.problem->layout();
  const PriorMarginal hr = coordinate_prior(*sp.problem, 1);
  EXPECT_TRUE(hr.proper);
  EXPECT_NEAR(hr.sd, 0.1, 1e-12);
  EXPECT_NEAR(hr.pdf(hr.mean), 1.0 / (0.1 * std::sqrt(2 * M_PI)), 1e-9);
  const PriorMarginal pf = coordinate_prior(*sp.problem, layout.model_begin());
  EXPECT_TRUE(pf.proper);
  EXPECT_NEAR(pf.mean, std::log(0.3 / 0.7), 1e-12);
  EXPECT_FALSE(coordinate_prior(*sp.problem, layout.model_begin() + 1).proper);
  EXPECT_FALSE(coordinate_prior(*sp.problem, layout.nuisance_begin()).proper);
}

TEST(Profile, MapProfilesStartAtZero) {
  const auto& sp = small_problem();
  ProfilingSettings s;
  s.grid_points = 5;
  s.half_width_sd = 1.0;
  const auto curves = profile_all(*sp.problem, small_map(), s);
  EXPECT_EQ(static_cast<Eigen::Index>(curves.size()), sp.problem->layout().size() - 4);
  for (const auto& c : curves) {
    EXPECT_NEAR(c.pd[2], 0.0, 1e-9);
    for (double v : c.pd) EXPECT_GE(v, -1e-4);
  }
}
