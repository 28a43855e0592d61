#include "cohortcal/model_selection.hpp"

#include <algorithm>
#include <cmath>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

ParameterVector posterior_mean(std::span<const ParameterVector> draws) {
  if (draws.empty()) throw ValidationError("posterior mean of an empty sample");
  ParameterVector m = draws[0];
  const double n = static_cast<double>(draws.size());
  auto avg_scalar = [&](double ParameterVector::*f) {
    double s = 0.0;
    for (const auto& d : draws) s += d.*f;
    m.*f = s / n;
  };
  auto avg_vector = [&](Eigen::VectorXd ParameterVector::*f) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero((m.*f).size());
    for (const auto& d : draws) {
      if ((d.*f).size() != s.size()) throw ValidationError("posterior draws have inconsistent shapes");
      s += d.*f;
    }
    m.*f = s / n;
  };
  for (auto f : {&ParameterVector::p_former, &ParameterVector::init_intercept, &ParameterVector::quit_intercept,
                 &ParameterVector::sigma_init, &ParameterVector::sigma_quit})
    avg_scalar(f);
  for (auto f : {&ParameterVector::init_weights, &ParameterVector::quit_age_weights,
                 &ParameterVector::quit_year_weights, &ParameterVector::switch_rates, &ParameterVector::hr_current,
                 &ParameterVector::hr_former})
    avg_vector(f);
  return m;
}

double dic(std::span<const Eigen::VectorXd> sample, const std::function<double(const Eigen::VectorXd&)>& log_lik) {
  return dic<Eigen::VectorXd>(sample, log_lik, [](std::span<const Eigen::VectorXd> s) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(s[0].size());
    for (const auto& x : s) m += x;
    return Eigen::VectorXd(m / static_cast<double>(s.size()));
  });
}

double dic(std::span<const ParameterVector> sample, const std::function<double(const ParameterVector&)>& log_lik) {
  return dic<ParameterVector>(sample, log_lik, [](std::span<const ParameterVector> s) { return posterior_mean(s); });
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ValidationError("quantile of an empty list");
  if (!(p >= 0 && p <= 1)) throw ValidationError("quantile probability outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto k = static_cast<std::size_t>(std::floor(h));
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (h - static_cast<double>(k)) * (v[k + 1] - v[k]);
}

SummaryInterval eti(std::span<const double> values, double coverage) {
  if (values.empty()) throw ValidationError("interval of an empty list");
  if (!(coverage > 0 && coverage < 1)) throw ValidationError("coverage must be in (0, 1)");
  const std::vector<double> v(values.begin(), values.end());
  return {quantile(v, 0.5), quantile(v, 0.5 * (1.0 - coverage)), quantile(v, 0.5 * (1.0 + coverage))};
}

double bayesian_p_value(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) throw ValidationError("predictions and observed statistics differ in length");
  if (predicted.empty()) throw ValidationError("p-value of an empty sample");
  long hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] >= observed[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double bayesian_p_value(std::span<const double> predicted, double observed) {
  const std::vector<double> obs(predicted.size(), observed);
  return bayesian_p_value(predicted, obs);
}

double extreme_comparison(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("comparison needs two non-empty samples");
  std::vector<double> s(a.begin(), a.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double total = 0.0;
  for (double x : b) {
    const double below = static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) / n;
    const double above = static_cast<double>(s.end() - std::lower_bound(s.begin(), s.end(), x)) / n;
    total += std::min(1.0, 2.0 * std::min(below, above));
  }
  return total / static_cast<double>(b.size());
}

std::vector<ResidualFamily> residual_summary(std::span<const SurveyCell> cells,
                                             std::span<const CellProbabilities> model) {
  if (cells.size() != model.size()) throw ValidationError("model proportions not aligned with survey cells");
  std::vector<ResidualFamily> fam{{"smoker", 0, 0, 0}, {"never_among_nonsmokers", 0, 0, 0}, {"quit_early_among_ex", 0, 0, 0}};
  std::vector<std::vector<double>> r(3);
  auto lo = [](double p) { return logit(std::clamp(p, 1e-12, 1.0 - 1e-12)); };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto p = clamp_probabilities(cells[i].proportions);
    const auto m = clamp_probabilities(model_vector(cells[i], model[i]));
    const double p_ex = 1.0 - p[0] - p[1];
    const double m_ex = 1.0 - m[0] - m[1];
    r[0].push_back(lo(p[1]) - lo(m[1]));
    r[1].push_back(lo(p[0] / (p[0] + p_ex)) - lo(m[0] / (m[0] + m_ex)));
    if (cells[i].by_group) r[2].push_back(lo(p[2] / p_ex) - lo(m[2] / m_ex));
  }
  for (std::size_t f = 0; f < 3; ++f) {
    const auto& v = r[f];
    fam[f].count = static_cast<long>(v.size());
    if (v.empty()) continue;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    fam[f].mean = mean;
    fam[f].sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return fam;
}

}  // namespace cohortcal
