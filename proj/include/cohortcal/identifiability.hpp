#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/optimize.hpp"

namespace cohortcal {

enum class Identifiability { identifiable, practically_non_identifiable, structurally_non_identifiable };
std::string_view to_string(Identifiability c);

struct ProfileOptions {
  double half_width_sd = 7.1;  // neighbourhood, in MAP standard deviations
  int grid_points = 81;        // odd, so the MAP is a grid point
  bool use_predictor = true;   // false: corrector only, from the previous point
  std::vector<bool> frozen;    // components held at their MAP value
  MinimizeOptions corrector{200, 1e-8, 1e-14, 1e-5, std::nullopt};
  std::optional<Eigen::MatrixXd> hessian;  // d x d, of -log posterior; frozen rows unused
  HessianOptions hessian_options;
  double alpha = 0.05;
  int total_df = 0;  // 0: number of parameters
  double flat_tolerance = 1e-3;
};

struct ProfileCurve {
  Eigen::Index component = 0;
  double map_value = 0.0;
  double sd = 0.0;  // MAP standard deviation of the component
  double half_width_sd = 7.1;
  std::vector<double> t;
  std::vector<double> pd;
  std::vector<int> iterations;
  std::vector<bool> converged;
  Identifiability classification = Identifiability::identifiable;
  double confidence_level = 0.0;  // highest level whose CI fits in the neighbourhood

  long total_iterations() const;
  bool all_converged() const;
};

struct Classification {
  Identifiability kind;
  double confidence_level;
};

double chi_squared_quantile(double p, double df);

// PD_i on a grid over +-half_width_sd MAP sd, walking outward from the MAP on
// each side with a quadratic-model predictor and a quasi-Newton corrector.
// Throws ValidationError if the Hessian at theta_map is not positive definite
// for -log_post.
ProfileCurve profile_posterior(const Objective& log_post, const Eigen::VectorXd& theta_map, Eigen::Index i,
                               const ProfileOptions& opt = {});

Classification classify(const ProfileCurve& curve, double alpha, int total_df, double flat_tolerance = 1e-3);

struct PriorMarginal {
  std::function<double(double)> pdf;
  double mean = 0.0;
  double sd = 1.0;
  bool proper = true;
};

struct OverlapResult {
  double statistic = 0.0;
  bool weak = false;  // statistic <= threshold
};

double silverman_bandwidth(std::span<const double> sample);
double kde(std::span<const double> sample, double bandwidth, double x);
OverlapResult overlap_result(double statistic, double threshold = 0.35);
// Midpoint rule (512 points) of min(prior pdf, Gaussian KDE of the sample).
OverlapResult overlap(const PriorMarginal& prior, std::span<const double> posterior_sample, double threshold = 0.35);

}  // namespace cohortcal
