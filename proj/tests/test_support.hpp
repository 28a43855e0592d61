#pragma once

#include <cmath>
#include <random>

#include "cohortcal/model.hpp"

namespace testing_support {

// Plausible random parameters for model `spec`.
inline cohortcal::ParameterVector random_parameters(const cohortcal::ModelSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  cohortcal::ParameterVector p = cohortcal::ParameterVector::zeros(spec);
  p.p_former = unif(0.05, 0.4);
  p.init_intercept = unif(-1.0, 1.0);
  for (auto& w : p.init_weights) w = unif(-1.0, 1.0);
  p.quit_intercept = std::log(unif(0.005, 0.06));
  for (auto& w : p.quit_age_weights) w = unif(-0.8, 0.8);
  for (auto& w : p.quit_year_weights) w = unif(-1.0, 1.0);
  for (auto& w : p.switch_rates) w = unif(0.001, 0.05);
  for (auto& h : p.hr_current) h = unif(1.2, 3.5);
  for (auto& h : p.hr_former) h = unif(1.0, 2.0);
  p.sigma_init = unif(0.5, 2.0);
  p.sigma_quit = unif(0.5, 2.0);
  return p;
}

}  // namespace testing_support
