#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/cohort.hpp"
#include "cohortcal/errors.hpp"
#include "cohortcal/model.hpp"
#include "cohortcal/observation.hpp"

namespace cohortcal {

struct PosteriorSample {
  std::vector<ParameterVector> draws;
  int chains = 0;
  int per_chain = 0;
  std::uint64_t seed = 0;
};

// Elementwise mean on the natural scale (hazard ratios, P_F, lambda_R, Z, sigma).
ParameterVector posterior_mean(std::span<const ParameterVector> draws);

// DIC = -4 mean(L(theta_j)) + 2 L(mean theta). `mean` maps the sample to the
// point at which the second term is evaluated.
template <class T>
double dic(std::span<const T> sample, const std::function<double(const T&)>& log_lik,
           const std::function<T(std::span<const T>)>& mean);
double dic(std::span<const Eigen::VectorXd> sample, const std::function<double(const Eigen::VectorXd&)>& log_lik);
double dic(std::span<const ParameterVector> sample, const std::function<double(const ParameterVector&)>& log_lik);

struct SummaryInterval {
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double p);
SummaryInterval eti(std::span<const double> values, double coverage = 0.90);

// (1/n) #{ predicted_i >= observed_i }
double bayesian_p_value(std::span<const double> predicted, std::span<const double> observed);
double bayesian_p_value(std::span<const double> predicted, double observed);

// Mean over b in B of min(1, 2 min(P(A <= b), P(A >= b))).
double extreme_comparison(std::span<const double> a, std::span<const double> b);

struct ResidualFamily {
  std::string name;
  long count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

// logit(observed) - logit(model) per family: smoker, never among non-smokers,
// quit before the first age-at-quit break among ex-smokers (group-resolved
// cells only).
std::vector<ResidualFamily> residual_summary(std::span<const SurveyCell> cells,
                                             std::span<const CellProbabilities> model);

template <class T>
double dic(std::span<const T> sample, const std::function<double(const T&)>& log_lik,
           const std::function<T(std::span<const T>)>& mean) {
  if (sample.empty()) throw ValidationError("DIC of an empty sample");
  std::vector<double> ll;
  ll.reserve(sample.size());
  for (const T& s : sample) ll.push_back(log_lik(s));
  double total = 0.0;
  for (double v : ll) total += v;
  const double l_hat = total / static_cast<double>(ll.size());
  return -4.0 * l_hat + 2.0 * log_lik(mean(sample));
}

}  // namespace cohortcal
