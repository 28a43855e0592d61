#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohortcal/model.hpp"
#include "cohortcal/mortality.hpp"
#include "cohortcal/observation.hpp"
#include "cohortcal/random.hpp"
#include "cohortcal/sampler.hpp"

namespace cohortcal {

// 17 significant digits; reads back to the same double.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row
};

// Comma-separated, header required, no quoting. Blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Columns: survey_id, sex, age, birth_year, category, count, weight_sum,
// weight_sq_sum. Blank weight fields mean unit weights (weight_sum =
// weight_sq_sum = count).
std::vector<SurveyRow> read_survey_rows(const std::filesystem::path& path);
void write_survey_rows(const std::filesystem::path& path, const std::vector<SurveyRow>& rows);
// Also checks ages against [start_age, end_age] and the normalized shares.
SurveyCellTable load_survey_table(const std::filesystem::path& path, const ModelSpec& spec, bool use_weights = true);

// Columns: sex, year, age, rate.
MortalityTable load_mortality(const std::filesystem::path& path);
void write_mortality(const std::filesystem::path& path, const MortalityTable& table);

// Columns: sex, component, mean, then one covariance column per component.
// Components are C:<age> for every group followed by F:<age>, on the log
// scale. One block of rows per sex.
HazardRatioPrior load_hr_prior(const std::filesystem::path& path);
void write_hr_prior(const std::filesystem::path& path, const HazardRatioPrior& prior);

// Posterior draws on the natural scale, one row per draw with the chain
// number first.
void write_parameter_draws(const std::filesystem::path& path, const ModelSpec& spec,
                           const std::vector<ParameterVector>& draws, int per_chain);
std::vector<ParameterVector> read_parameter_draws(const std::filesystem::path& path, const ModelSpec& spec,
                                                  int* per_chain = nullptr);
std::vector<std::string> parameter_names(const ModelSpec& spec);
std::vector<double> flatten(const ParameterVector& p);
ParameterVector unflatten(const ModelSpec& spec, const std::vector<double>& values);

struct SyntheticDesign {
  std::vector<Sex> sexes{Sex::female, Sex::male};
  std::vector<int> waves;        // survey years
  std::vector<int> birth_years;  // cohorts
  double n_per_cell = 5000.0;
  std::vector<double> design_effect{1.3};  // one value, or one per wave
  bool by_group = false;                   // resolve ex-smokers by age at quitting

  double deff(std::size_t wave) const;
  void validate() const;
};

// Cells of every (sex, wave, cohort) whose age lies in [start_age, end_age];
// counts follow a Dirichlet-multinomial with n_eff = n / deff. Throws
// ValidationError when a cohort falls outside the mortality coverage.
SurveyCellTable generate_synthetic(const ModelSpec& spec, const std::map<Sex, ParameterVector>& truth,
                                   const MortalityTable& mortality, const SyntheticDesign& design, RandomStream& rng);

// Log hazard-ratio prior centred at the truth plus N(0, sd^2) noise, with
// covariance sd^2 I.
HazardRatioPrior synthetic_hr_prior(const ModelSpec& spec, const std::map<Sex, ParameterVector>& truth, double sd,
                                    RandomStream& rng);

struct ProfilingSettings {
  double half_width_sd = 7.1;
  int grid_points = 81;
  double alpha = 0.05;
  bool freeze_hazard_ratios = true;
  bool use_predictor = true;
};

struct IoSettings {
  std::filesystem::path survey, mortality, hr_prior;
  bool use_weights = true;
};

struct SyntheticSettings {
  SyntheticDesign design;
  std::map<Sex, ParameterVector> truth;
  double hr_prior_sd = 0.1;
  int mortality_year_hi = 2100;
};

struct CalibrationConfig {
  ModelSpec model;
  std::vector<Sex> sexes{Sex::female, Sex::male};
  SamplerConfig sampler;
  ProfilingSettings profiling;
  IoSettings io;
  std::optional<SyntheticSettings> synthetic;

  void validate() const;
};

// Nested sections model / sampler / profiling / io / synthetic. Relative
// paths resolve against the config file's directory. Existing input paths
// are checked when check_inputs is set.
CalibrationConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir, bool check_inputs);
CalibrationConfig load_config(const std::filesystem::path& path, bool check_inputs = true);
nlohmann::json config_to_json(const CalibrationConfig& config);

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const ParameterVector& p);
ParameterVector params_from_json(const ModelSpec& spec, const nlohmann::json& j);

// Model-D style truth used when the synthetic section gives none.
ParameterVector default_truth(const ModelSpec& spec, Sex sex);

}  // namespace cohortcal
