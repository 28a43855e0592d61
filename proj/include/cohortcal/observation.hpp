#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/cohort.hpp"
#include "cohortcal/model.hpp"
#include "cohortcal/mortality.hpp"
#include "cohortcal/random.hpp"

namespace cohortcal {

// One line of the survey CSV: aggregated respondents in a category.
struct SurveyRow {
  std::string survey_id;
  Sex sex = Sex::female;
  int age = 0;
  int birth_year = 0;
  std::string category;  // never | current | ex | ex:<group>
  double count = 0.0;
  double weight_sum = 0.0;
  double weight_sq_sum = 0.0;
};

// Cross-tabulated cell. Categories are (never, current, ex) or, when the
// survey resolves age at quitting, (never, current, ex:0, ..., ex:G-1).
struct SurveyCell {
  std::string survey_id;
  Sex sex = Sex::female;
  int age = 0;
  int birth_year = 0;
  bool by_group = false;
  std::vector<double> counts;       // raw respondents per category
  std::vector<double> proportions;  // weighted, on the simplex
  double n = 0.0;                   // raw count
  double n_eff = 0.0;               // effective sample size

  CellKey key() const { return {sex, age, birth_year}; }
  std::size_t categories() const { return counts.size(); }
};

struct SurveyCellTable {
  std::vector<SurveyRow> rows;
  std::vector<SurveyCell> cells;
};

// Aggregates rows into cells. With use_weights = false, proportions are the
// raw count shares and n_eff = n. Throws ValidationError with the offending
// row number on schema violations.
SurveyCellTable build_cell_table(std::vector<SurveyRow> rows, int quit_groups, bool use_weights = true);

double effective_sample_size(std::span<const double> weights);

// Model probability vector aligned with the cell's categories.
std::vector<double> model_vector(const SurveyCell& cell, const CellProbabilities& m);

// Clamp to [1e-12, 1 - 1e-12] and renormalize.
std::vector<double> clamp_probabilities(std::span<const double> m);

// log Dir(m; 1 + p n_eff), evaluated at the (clamped) model probabilities.
double dirichlet_log_likelihood(std::span<const double> p, double n_eff, std::span<const double> m);
double cell_log_likelihood(const SurveyCell& cell, std::span<const double> m);
double total_log_likelihood(std::span<const SurveyCell> cells, std::span<const std::vector<double>> m);

// Dirichlet-multinomial with alpha0 = n (n_eff - 1) / (n - n_eff); plain
// multinomial when n_eff = n.
std::vector<double> predictive_counts_sample(double n, double n_eff, std::span<const double> m, RandomStream& rng);
double dirichlet_multinomial_concentration(double n, double n_eff);

// Multivariate normal prior on log hazard ratios, ordered
// (current by age group, former by age group).
class HazardRatioPrior {
 public:
  HazardRatioPrior() = default;
  explicit HazardRatioPrior(std::vector<int> age_groups) : age_groups_(std::move(age_groups)) {}

  // Throws ValidationError if shapes mismatch or covariance is not SPD.
  void set(Sex sex, Eigen::VectorXd mean, Eigen::MatrixXd covariance);
  bool has(Sex sex) const { return blocks_[index(sex)].has_value(); }
  const std::vector<int>& age_groups() const { return age_groups_; }
  const Eigen::VectorXd& mean(Sex sex) const;
  const Eigen::MatrixXd& covariance(Sex sex) const;
  // -1/2 (x - mean)' inv(cov) (x - mean); the normalizing constant is omitted.
  double log_density(Sex sex, const Eigen::VectorXd& log_hr) const;

 private:
  struct Block {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::LLT<Eigen::MatrixXd> llt;
  };
  static std::size_t index(Sex s) { return s == Sex::female ? 0 : 1; }
  const Block& block(Sex sex) const;
  std::vector<int> age_groups_;
  std::array<std::optional<Block>, 2> blocks_;
};

// N(0, (X'WX)^{-1} w / sigma^2) on a coefficient vector including its
// intercept.
class PenaltyPrior {
 public:
  PenaltyPrior() = default;
  PenaltyPrior(Eigen::MatrixXd X, Eigen::VectorXd W);

  Eigen::Index dim() const { return unit_precision_.rows(); }
  const Eigen::MatrixXd& unit_precision() const { return unit_precision_; }  // X'WX / w
  // d log sigma - sigma^2 / 2 z' (X'WX / w) z
  double log_density(const Eigen::VectorXd& z, double sigma) const;

 private:
  Eigen::MatrixXd unit_precision_;
};

PenaltyPrior build_init_penalty(const ModelSpec& spec, std::span<const SurveyCell> cells, int max_age = 25);
PenaltyPrior build_quit_penalty(const ModelSpec& spec, std::span<const SurveyCell> cells);

// Normal prior on logit(2 P_F): mean logit(0.3), P(2 P_F < 0.02) = 5%.
struct FormerSharePrior {
  static double mean();
  static double sd();
};

struct PriorSet {
  HazardRatioPrior hazard;
  PenaltyPrior init;
  PenaltyPrior quit;
};

double log_prior(const ParameterVector& params, const ModelSpec& spec, Sex sex, const PriorSet& priors);

// The calibration posterior for one sex.
class CalibrationProblem {
 public:
  CalibrationProblem(ModelSpec spec, Sex sex, std::vector<SurveyCell> cells,
                     std::shared_ptr<const MortalityTable> mortality, PriorSet priors);

  const ModelSpec& spec() const { return spec_; }
  Sex sex() const { return sex_; }
  const ParameterLayout& layout() const { return layout_; }
  const std::vector<SurveyCell>& cells() const { return cells_; }
  const MortalityTable& mortality() const { return *mortality_; }
  const PriorSet& priors() const { return priors_; }

  double log_prior(const ParameterVector& p) const;
  // Throws SolveError when a cohort cannot be solved.
  double log_likelihood(const ParameterVector& p) const;
  double log_posterior(const ParameterVector& p) const;
  std::vector<CellProbabilities> proportions(const ParameterVector& p) const;

  struct Cohort {
    int birth_year;
    int max_age;
  };
  const std::vector<Cohort>& cohorts() const { return cohorts_; }
  const std::vector<std::size_t>& cell_cohort() const { return cell_cohort_; }

 private:
  ModelSpec spec_;
  Sex sex_;
  std::vector<SurveyCell> cells_;
  std::shared_ptr<const MortalityTable> mortality_;
  PriorSet priors_;
  ParameterLayout layout_;
  std::vector<Cohort> cohorts_;
  std::vector<std::size_t> cell_cohort_;
};

// Per-thread likelihood evaluator that keeps the cohort quit histories of the
// two most recent model-parameter vectors, so hazard-ratio-only changes (and a
// return to the current state after a rejected proposal) skip them.
class LikelihoodEvaluator {
 public:
  explicit LikelihoodEvaluator(const CalibrationProblem& problem) : problem_(&problem) {}
  double log_likelihood(const ParameterVector& p);
  std::vector<CellProbabilities> proportions(const ParameterVector& p);
  long history_builds() const { return builds_; }

 private:
  void refresh(const ParameterVector& p);
  const CalibrationProblem* problem_;
  struct Entry {
    std::vector<double> key;
    std::vector<CohortSolver> solvers;
  };
  std::array<Entry, 2> cache_;  // cache_[0] is the most recent
  long builds_ = 0;
};

}  // namespace cohortcal
