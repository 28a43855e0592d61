#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/data_io.hpp"
#include "cohortcal/identifiability.hpp"
#include "cohortcal/model_selection.hpp"
#include "cohortcal/observation.hpp"
#include "cohortcal/optimize.hpp"
#include "cohortcal/sampler.hpp"

namespace cohortcal {

using Progress = std::function<void(const std::string&)>;

// Penalty priors from the sex's cells plus the hazard-ratio prior.
std::shared_ptr<const CalibrationProblem> make_problem(const ModelSpec& spec, Sex sex,
                                                       const std::vector<SurveyCell>& cells,
                                                       std::shared_ptr<const MortalityTable> mortality,
                                                       const HazardRatioPrior& hazard);

// Log posterior on the calibration coordinates: survey likelihood plus
// priors and the Jacobian of the log-scale components.
class PosteriorTarget : public LogTarget {
 public:
  explicit PosteriorTarget(std::shared_ptr<const CalibrationProblem> problem);

  Eigen::Index dim() const override { return problem_->layout().size(); }
  TargetValue evaluate(const Eigen::VectorXd& theta) override;
  double prior_term(const Eigen::VectorXd& theta) override;
  std::unique_ptr<LogTarget> clone() const override { return std::make_unique<PosteriorTarget>(problem_); }

  // -inf outside the support; SolveError also maps to -inf.
  double log_posterior(const Eigen::VectorXd& theta);
  const CalibrationProblem& problem() const { return *problem_; }

 private:
  std::shared_ptr<const CalibrationProblem> problem_;
  LikelihoodEvaluator evaluator_;
};

// Crude data-driven start: ever-smoker share from the youngest cells, a 2%
// quit rate, zero spline weights and hazard ratios at the prior mean.
Eigen::VectorXd initial_coordinates(const CalibrationProblem& problem);

struct MapEstimate {
  Eigen::VectorXd theta;            // full coordinates
  double log_posterior = 0.0;
  std::vector<bool> fixed;          // hazard-ratio components held at the prior mean
  Eigen::MatrixXd hessian;          // of -log posterior over the free components
  Eigen::MatrixXd covariance;       // full; hazard block is the prior covariance
  bool hessian_repaired = false;    // eigenvalues floored to make it PD
  int restarts = 0;
  bool converged = false;
};

// MAP over the non-hazard-ratio components, hazard ratios at their prior
// mode, followed by a Richardson Hessian for the covariance.
MapEstimate find_map(const CalibrationProblem& problem, const Progress& progress = {});

// Hazard ratios (prior covariance), model parameters and the likelihood-free
// nuisance block (MAP covariance).
std::vector<Block> calibration_blocks(const CalibrationProblem& problem, const MapEstimate& map);

// Overdispersed starts with a finite posterior; hazard ratios around the prior
// mean, the rest around the MAP.
std::vector<Eigen::VectorXd> chain_starts(const CalibrationProblem& problem, const MapEstimate& map,
                                          const SamplerConfig& config);

struct CalibrationResult {
  Sex sex = Sex::female;
  MapEstimate map;
  ChainSet chains;
  PosteriorSample sample;
};

CalibrationResult calibrate(std::shared_ptr<const CalibrationProblem> problem, const SamplerConfig& config,
                            const Progress& progress = {});

// Profiles every free component around the MAP; hazard ratios stay frozen
// when the settings say so.
std::vector<ProfileCurve> profile_all(const CalibrationProblem& problem, const MapEstimate& map,
                                      const ProfilingSettings& settings, const Progress& progress = {});

// Prior marginal of coordinate i where it is proper (log hazard ratios and
// logit 2 P_F); an improper marginal otherwise.
PriorMarginal coordinate_prior(const CalibrationProblem& problem, Eigen::Index i);

// DIC of a posterior sample under the problem's likelihood.
double sample_dic(const CalibrationProblem& problem, const PosteriorSample& sample);

}  // namespace cohortcal
