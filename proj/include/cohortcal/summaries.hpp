#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cohortcal/model.hpp"
#include "cohortcal/model_selection.hpp"
#include "cohortcal/observation.hpp"
#include "cohortcal/random.hpp"

namespace cohortcal {

double initiation_probability(const ModelSpec& spec, const ParameterVector& p, double birth_year);
// `time` is the calendar year or the birth year, following the model's quit-time axis.
double quit_rate_at(const ModelSpec& spec, const ParameterVector& p, double age, double time);

// One CSV line: quantity, group, median, lo, hi, p_value (blank when absent).
struct SummaryRow {
  std::string quantity;
  std::string group;
  SummaryInterval interval;
  std::optional<double> p_value;
};

using SamplesBySex = std::map<Sex, std::vector<ParameterVector>>;

// 90% ETIs per sex; with both sexes present, an extra row per quantity with
// the female-male extreme comparison as its p-value.
std::vector<SummaryRow> initiation_table(const ModelSpec& spec, const SamplesBySex& samples,
                                         const std::vector<int>& birth_years);
std::vector<SummaryRow> quit_rate_table(const ModelSpec& spec, const SamplesBySex& samples,
                                        const std::vector<int>& ages, const std::vector<int>& years);
std::vector<SummaryRow> switch_rate_table(const ModelSpec& spec, const SamplesBySex& samples);

// Posterior predictive proportions per cell and category, with the
// predictive p-value of the observed proportion, plus a coverage row: the
// share of observed proportions inside their 90% predictive ETI.
std::vector<SummaryRow> predictive_table(const CalibrationProblem& problem, const std::vector<ParameterVector>& draws,
                                         RandomStream& rng);

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace cohortcal
