#include "cohortcal/summaries.hpp"

#include <functional>

#include "cohortcal/cohort.hpp"
#include "cohortcal/data_io.hpp"
#include "cohortcal/errors.hpp"

namespace cohortcal {

double initiation_probability(const ModelSpec& spec, const ParameterVector& p, double birth_year) {
  return initiation_proportion(birth_year, {p.init_intercept, p.init_weights}, spec.init_basis());
}

double quit_rate_at(const ModelSpec& spec, const ParameterVector& p, double age, double time) {
  return quit_rate(age, time, {0.0, p.quit_age_weights}, spec.quit_age_basis(), {0.0, p.quit_year_weights},
                   spec.quit_year_basis(), p.quit_intercept);
}

namespace {

using Extract = std::function<double(const ParameterVector&)>;

void add_quantity(std::vector<SummaryRow>& out, const SamplesBySex& samples, const std::string& quantity,
                  const std::string& suffix, const Extract& f) {
  std::map<Sex, std::vector<double>> values;
  for (const auto& [sex, draws] : samples) {
    auto& v = values[sex];
    for (const auto& p : draws) v.push_back(f(p));
    out.push_back({quantity, std::string(to_string(sex)) + suffix, eti(v, 0.90), std::nullopt});
  }
  if (values.size() == 2) {
    const auto& w = values.at(Sex::female);
    const auto& m = values.at(Sex::male);
    std::vector<double> diff;
    for (std::size_t i = 0; i < std::min(w.size(), m.size()); ++i) diff.push_back(w[i] - m[i]);
    out.push_back({quantity, "female-male" + suffix, eti(diff, 0.90), extreme_comparison(w, m)});
  }
}

}  // namespace

std::vector<SummaryRow> initiation_table(const ModelSpec& spec, const SamplesBySex& samples,
                                         const std::vector<int>& birth_years) {
  std::vector<SummaryRow> out;
  for (int c : birth_years)
    add_quantity(out, samples, "initiation", ":" + std::to_string(c),
                 [&](const ParameterVector& p) { return initiation_probability(spec, p, c); });
  return out;
}

std::vector<SummaryRow> quit_rate_table(const ModelSpec& spec, const SamplesBySex& samples,
                                        const std::vector<int>& ages, const std::vector<int>& years) {
  std::vector<SummaryRow> out;
  for (int a : ages)
    for (int y : years) {
      const double time = spec.quit_time_axis == QuitTimeAxis::cohort ? y - a : y;
      add_quantity(out, samples, "quit_rate_age_" + std::to_string(a), ":" + std::to_string(y),
                   [&](const ParameterVector& p) { return quit_rate_at(spec, p, a, time); });
    }
  return out;
}

std::vector<SummaryRow> switch_rate_table(const ModelSpec& spec, const SamplesBySex& samples) {
  std::vector<SummaryRow> out;
  for (int g = 0; g < spec.switching_group_count(); ++g)
    add_quantity(out, samples, "switch_rate_group_" + std::to_string(g), "",
                 [g](const ParameterVector& p) { return p.switch_rates(g); });
  return out;
}

std::vector<SummaryRow> predictive_table(const CalibrationProblem& problem, const std::vector<ParameterVector>& draws,
                                         RandomStream& rng) {
  if (draws.empty()) throw ValidationError("predictive table needs posterior draws");
  LikelihoodEvaluator ev(problem);
  const auto& cells = problem.cells();
  // predicted[cell][category][draw]
  std::vector<std::vector<std::vector<double>>> predicted(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    predicted[i].assign(cells[i].categories(), std::vector<double>(draws.size()));
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const auto probs = ev.proportions(draws[d]);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto m = clamp_probabilities(model_vector(cells[i], probs[i]));
      const auto counts = predictive_counts_sample(cells[i].n, cells[i].n_eff, m, rng);
      for (std::size_t j = 0; j < counts.size(); ++j) predicted[i][j][d] = counts[j] / cells[i].n;
    }
  }
  std::vector<SummaryRow> out;
  long inside = 0, total = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SurveyCell& c = cells[i];
    const std::string group = c.survey_id + ":" + std::string(to_string(c.sex)) + ":" + std::to_string(c.age) + ":" +
                              std::to_string(c.birth_year);
    for (std::size_t j = 0; j < c.categories(); ++j) {
      const std::string cat = j == 0 ? "never" : j == 1 ? "current" : c.by_group ? "ex:" + std::to_string(j - 2) : "ex";
      const SummaryInterval ci = eti(predicted[i][j], 0.90);
      const double obs = c.proportions[j];
      inside += obs >= ci.lo && obs <= ci.hi;
      ++total;
      out.push_back({"predicted_" + cat, group, ci, bayesian_p_value(predicted[i][j], obs)});
    }
  }
  const double share = total ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
  out.push_back({"coverage_90", std::string(to_string(problem.sex())), {share, share, share}, std::nullopt});
  return out;
}

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  CsvTable t;
  t.header = {"quantity", "group", "median", "lo", "hi", "p_value"};
  for (const auto& r : rows)
    t.rows.push_back({r.quantity, r.group, format_double(r.interval.median), format_double(r.interval.lo),
                      format_double(r.interval.hi), r.p_value ? format_double(*r.p_value) : ""});
  write_csv(path, t);
}

}  // namespace cohortcal
