#include "cohortcal/model.hpp"

#include <algorithm>
#include <cmath>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

std::string_view to_string(Sex s) { return s == Sex::female ? "female" : "male"; }

Sex parse_sex(std::string_view s) {
  if (s == "female" || s == "F" || s == "f") return Sex::female;
  if (s == "male" || s == "M" || s == "m") return Sex::male;
  throw ValidationError("unknown sex '" + std::string(s) + "'");
}

const std::vector<std::string>& preset_labels() {
  static const std::vector<std::string> labels{"Null", "A", "B", "C", "D", "E", "F", "G"};
  return labels;
}

ModelSpec ModelSpec::preset(std::string_view label) {
  struct Row {
    std::string_view label;
    int init, age, year;
    bool never;
  };
  static constexpr Row rows[] = {{"Null", 0, 0, 0, false}, {"A", 2, 0, 0, false}, {"B", 2, 2, 0, false},
                                 {"C", 2, 2, 1, false},    {"D", 2, 2, 1, true},  {"E", 2, 2, 2, true},
                                 {"F", 3, 2, 2, true},     {"G", 4, 2, 2, true}};
  for (const Row& r : rows) {
    if (r.label != label) continue;
    ModelSpec s;
    s.label = std::string(label);
    s.df_init = r.init;
    s.df_quit_age = r.age;
    s.df_quit_year = r.year;
    s.allow_report_never = r.never;
    return s;
  }
  throw ValidationError("unknown model preset '" + std::string(label) + "'");
}

int ModelSpec::switching_group_count() const {
  if (!allow_report_never) return 0;
  int n = 0;
  for (double b : age_at_quit_breaks)
    if (b <= switch_max_quit_age) ++n;
  return n;
}

int ModelSpec::hr_group_of(int age) const {
  int g = 0;
  for (int j = 0; j < hr_group_count(); ++j)
    if (age >= hr_age_groups[j]) g = j;
  return g;
}

int ModelSpec::quit_group_of(double quit_age) const {
  int g = 0;
  for (double b : age_at_quit_breaks)
    if (quit_age >= b) ++g;
  return g;
}

void ModelSpec::validate() const {
  if (!(delay_k > 0)) throw ValidationError("delay_k must be positive");
  if (start_age >= end_age) throw ValidationError("start_age must be below end_age");
  if (df_init < 0 || df_quit_age < 0 || df_quit_year < 0) throw ValidationError("negative spline df");
  for (std::size_t i = 0; i < age_at_quit_breaks.size(); ++i) {
    if (age_at_quit_breaks[i] < start_age) throw ValidationError("age-at-quit breaks must be >= start_age");
    if (i > 0 && !(age_at_quit_breaks[i] > age_at_quit_breaks[i - 1]))
      throw ValidationError("age-at-quit breaks must be strictly increasing");
  }
  if (hr_age_groups.empty()) throw ValidationError("at least one hazard-ratio age group required");
  for (std::size_t i = 1; i < hr_age_groups.size(); ++i)
    if (hr_age_groups[i] <= hr_age_groups[i - 1])
      throw ValidationError("hazard-ratio age groups must be strictly increasing");
  if (!(init_hi > init_lo) || !(quit_age_hi > quit_age_lo) || !(quit_year_hi > quit_year_lo))
    throw ValidationError("spline ranges require hi > lo");
}

ParameterVector ParameterVector::zeros(const ModelSpec& spec) {
  ParameterVector p;
  p.p_former = 0.15;
  p.init_intercept = 0.0;
  p.init_weights = Eigen::VectorXd::Zero(spec.df_init);
  p.quit_intercept = std::log(0.03);
  p.quit_age_weights = Eigen::VectorXd::Zero(spec.df_quit_age);
  p.quit_year_weights = Eigen::VectorXd::Zero(spec.df_quit_year);
  p.switch_rates = Eigen::VectorXd::Constant(spec.switching_group_count(), 0.01);
  p.hr_current = Eigen::VectorXd::Ones(spec.hr_group_count());
  p.hr_former = Eigen::VectorXd::Ones(spec.hr_group_count());
  return p;
}

void ParameterVector::validate(const ModelSpec& spec) const {
  auto shape = [](const Eigen::VectorXd& v, int n, const char* what) {
    if (v.size() != n) throw ValidationError(std::string("parameter block '") + what + "' has wrong length");
    if (!v.allFinite()) throw ValidationError(std::string("parameter block '") + what + "' not finite");
  };
  shape(init_weights, spec.df_init, "init_weights");
  shape(quit_age_weights, spec.df_quit_age, "quit_age_weights");
  shape(quit_year_weights, spec.df_quit_year, "quit_year_weights");
  shape(switch_rates, spec.switching_group_count(), "switch_rates");
  shape(hr_current, spec.hr_group_count(), "hr_current");
  shape(hr_former, spec.hr_group_count(), "hr_former");
  if (!(p_former >= 0.0 && p_former <= 0.5)) throw ValidationError("P_F must lie in [0, 0.5]");
  if (!std::isfinite(init_intercept) || !std::isfinite(quit_intercept))
    throw ValidationError("intercepts must be finite");
  if ((hr_current.array() <= 0).any() || (hr_former.array() <= 0).any())
    throw ValidationError("hazard ratios must be positive");
  if ((switch_rates.array() < 0).any()) throw ValidationError("switch rates must be non-negative");
  if (!(sigma_init > 0) || !(sigma_quit > 0)) throw ValidationError("nuisance scales must be positive");
}

ParameterLayout::ParameterLayout(const ModelSpec& spec) : spec_(spec) {
  hr_ = spec.hr_group_count();
  switch_ = spec.switching_group_count();
  for (int g = 0; g < hr_; ++g) names_.push_back("log_hr_current[" + std::to_string(spec.hr_age_groups[g]) + "]");
  for (int g = 0; g < hr_; ++g) names_.push_back("log_hr_former[" + std::to_string(spec.hr_age_groups[g]) + "]");
  names_.push_back("logit_2pf");
  names_.push_back("z_init0");
  for (int j = 0; j < spec.df_init; ++j) names_.push_back("z_init[" + std::to_string(j + 1) + "]");
  names_.push_back("z_quit0");
  for (int j = 0; j < spec.df_quit_age; ++j) names_.push_back("z_quit_age[" + std::to_string(j + 1) + "]");
  for (int j = 0; j < spec.df_quit_year; ++j) names_.push_back("z_quit_year[" + std::to_string(j + 1) + "]");
  for (int j = 0; j < switch_; ++j) names_.push_back("log_lambda_r[" + std::to_string(j) + "]");
  names_.push_back("log_sigma_init");
  names_.push_back("log_sigma_quit");
  size_ = static_cast<Eigen::Index>(names_.size());
}

Eigen::VectorXd ParameterLayout::to_coordinates(const ParameterVector& p) const {
  p.validate(spec_);
  Eigen::VectorXd t(size_);
  Eigen::Index i = 0;
  for (Eigen::Index g = 0; g < hr_; ++g) t[i++] = std::log(p.hr_current[g]);
  for (Eigen::Index g = 0; g < hr_; ++g) t[i++] = std::log(p.hr_former[g]);
  t[i++] = logit(2.0 * p.p_former);
  t[i++] = p.init_intercept;
  for (Eigen::Index j = 0; j < p.init_weights.size(); ++j) t[i++] = p.init_weights[j];
  t[i++] = p.quit_intercept;
  for (Eigen::Index j = 0; j < p.quit_age_weights.size(); ++j) t[i++] = p.quit_age_weights[j];
  for (Eigen::Index j = 0; j < p.quit_year_weights.size(); ++j) t[i++] = p.quit_year_weights[j];
  for (Eigen::Index j = 0; j < switch_; ++j) t[i++] = std::log(p.switch_rates[j]);
  t[i++] = std::log(p.sigma_init);
  t[i++] = std::log(p.sigma_quit);
  return t;
}

ParameterVector ParameterLayout::from_coordinates(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  if (t.size() != size_) throw ValidationError("coordinate vector has wrong length");
  ParameterVector p;
  Eigen::Index i = 0;
  p.hr_current = t.segment(i, hr_).array().exp();
  i += hr_;
  p.hr_former = t.segment(i, hr_).array().exp();
  i += hr_;
  p.p_former = 0.5 * logistic(t[i++]);
  p.init_intercept = t[i++];
  p.init_weights = t.segment(i, spec_.df_init);
  i += spec_.df_init;
  p.quit_intercept = t[i++];
  p.quit_age_weights = t.segment(i, spec_.df_quit_age);
  i += spec_.df_quit_age;
  p.quit_year_weights = t.segment(i, spec_.df_quit_year);
  i += spec_.df_quit_year;
  p.switch_rates = t.segment(i, switch_).array().exp();
  i += switch_;
  p.sigma_init = std::exp(t[i++]);
  p.sigma_quit = std::exp(t[i++]);
  return p;
}

double ParameterLayout::log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& t) const {
  return t.segment(switch_begin(), switch_).sum() + t.segment(nuisance_begin(), 2).sum();
}

}  // namespace cohortcal
