#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/splines.hpp"

namespace cohortcal {

enum class Sex { female, male };
std::string_view to_string(Sex s);
Sex parse_sex(std::string_view s);

enum class QuitTimeAxis { calendar_year, cohort };

struct ModelSpec {
  std::string label = "D";
  int df_init = 2;
  int df_quit_age = 2;
  int df_quit_year = 1;
  bool allow_report_never = true;
  std::vector<double> age_at_quit_breaks{30.0, 40.0};
  // Age-at-quit groups whose upper bound is at most this age may switch to
  // reporting as never.
  double switch_max_quit_age = 40.0;
  double delay_k = 2.0;
  int start_age = 20;
  int end_age = 99;
  QuitTimeAxis quit_time_axis = QuitTimeAxis::calendar_year;
  double init_lo = 1910.0, init_hi = 1997.0;
  double quit_age_lo = 20.0, quit_age_hi = 100.0;
  double quit_year_lo = 1930.0, quit_year_hi = 2017.0;
  // Lower ages of the hazard-ratio age groups; ages below the first group use
  // the first group's ratio.
  std::vector<int> hr_age_groups{45, 50, 55, 60, 65, 70, 75, 80, 85, 90};

  // Null, A..G.
  static ModelSpec preset(std::string_view label);

  int quit_group_count() const { return static_cast<int>(age_at_quit_breaks.size()) + 1; }
  int switching_group_count() const;
  int hr_group_count() const { return static_cast<int>(hr_age_groups.size()); }
  int hr_group_of(int age) const;
  int quit_group_of(double quit_age) const;
  SplineBasis init_basis() const { return SplineBasis::with_df(init_lo, init_hi, df_init); }
  SplineBasis quit_age_basis() const { return SplineBasis::with_df(quit_age_lo, quit_age_hi, df_quit_age); }
  SplineBasis quit_year_basis() const { return SplineBasis::with_df(quit_year_lo, quit_year_hi, df_quit_year); }
  void validate() const;
};

const std::vector<std::string>& preset_labels();

struct ParameterVector {
  double p_former = 0.15;  // P_F: quit-side share of ever-smokers at the start age
  double init_intercept = 0.0;
  Eigen::VectorXd init_weights;
  double quit_intercept = -3.0;
  Eigen::VectorXd quit_age_weights;
  Eigen::VectorXd quit_year_weights;
  Eigen::VectorXd switch_rates;  // lambda_R per switching age-at-quit group
  Eigen::VectorXd hr_current;    // natural scale, one per HR age group
  Eigen::VectorXd hr_former;
  double sigma_init = 1.0;
  double sigma_quit = 1.0;

  // Zero coefficients, unit hazard ratios, shapes matching the spec.
  static ParameterVector zeros(const ModelSpec& spec);
  // Throws ValidationError on shape or range violations.
  void validate(const ModelSpec& spec) const;
};

// Calibration coordinates: every component mapped to an unconstrained scale,
// grouped into the three sampler blocks in order:
//   hazard ratios:  log HR_C (groups), log HR_F (groups)
//   model params:   logit(2 P_F), Z_I0, Z_I, Z_Q0, Z_Q age, Z_Q year, log lambda_R
//   nuisance:       log sigma_init, log sigma_quit
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelSpec& spec);

  Eigen::Index size() const { return size_; }
  Eigen::Index hazard_begin() const { return 0; }
  Eigen::Index hazard_size() const { return 2 * hr_; }
  Eigen::Index model_begin() const { return 2 * hr_; }
  Eigen::Index model_size() const { return size_ - 2 - 2 * hr_; }
  Eigen::Index nuisance_begin() const { return size_ - 2; }
  Eigen::Index nuisance_size() const { return 2; }
  Eigen::Index switch_begin() const { return nuisance_begin() - switch_; }
  Eigen::Index switch_size() const { return switch_; }

  Eigen::VectorXd to_coordinates(const ParameterVector& p) const;
  ParameterVector from_coordinates(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  // log |d(natural)/d(coordinates)| for the components whose prior is stated
  // on the natural scale (lambda_R and sigma).
  double log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  ModelSpec spec_;
  Eigen::Index hr_ = 0, switch_ = 0, size_ = 0;
  std::vector<std::string> names_;
};

}  // namespace cohortcal
