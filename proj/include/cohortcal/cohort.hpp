#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/errors.hpp"
#include "cohortcal/model.hpp"
#include "cohortcal/mortality.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

// State at the start age. All quit-side mass sits in age-at-quit group 0.
struct InitialState {
  double never = 1.0;
  double current = 0.0;
  double recent = 0.0;
  double former = 0.0;
};

// Derivation: with no excess mortality before the start age a0 and a
// constant quit rate l over [a0 - k, a0], current smokers satisfy
// C(s) = C(a0) e^{l (a0 - s)} there. Recent quitters at a0 are exactly those
// who quit in [a0 - k, a0] (the category is empty at a0 - k), so
// Q(a0) = \int l C(s) ds = C(a0) (e^{l k} - 1), with C(a0) = P_I (1 - P_F).
// The remaining quit-side mass P_I P_F - Q(a0) is ex-smokers. When the
// assumptions would need a negative ex-smoker mass, Q(a0) is capped at
// P_I P_F.
InitialState initial_state(const ModelSpec& spec, double p_init, double p_former, double quit_rate_at_start);

struct CohortTrajectory {
  Sex sex = Sex::female;
  int birth_year = 0;
  int start_age = 0;
  int end_age = 0;
  Eigen::VectorXd never, current;             // by age row
  Eigen::MatrixXd recent, former, reported;   // rows ages, cols age-at-quit groups
  Eigen::VectorXd never_mortality;            // mu_N over [a, a+1), one per step
  Eigen::VectorXd secant_residual;            // relative residual per step

  int rows() const { return end_age - start_age + 1; }
  int row(int age) const;
  double alive(int age) const;
};

struct MortalityShares {
  double never = 1.0;
  double current = 0.0;
  double former = 0.0;
};

struct SecantOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

namespace detail {

// Safeguarded secant on f(m) = mu - m (rho_N + hC rho_C + hF rho_F)(m).
template <class Shares>
double solve_never_mortality_impl(double mu, double hc, double hf, Shares&& shares, const SecantOptions& opt,
                                  double* residual) {
  if (residual) *residual = 0.0;
  if (mu == 0.0) return 0.0;
  auto f = [&](double m) {
    const MortalityShares s = shares(m);
    const double total = s.never + s.current + s.former;
    return mu - m * (s.never + hc * s.current + hf * s.former) / total;
  };
  const double tol = opt.tolerance * mu;
  double lo = mu / std::max({1.0, hc, hf});
  double hi = mu / std::min({1.0, hc, hf});
  double flo = f(lo);
  if (std::abs(flo) <= tol) {
    if (residual) *residual = std::abs(flo) / mu;
    return lo;
  }
  double fhi = f(hi);
  if (std::abs(fhi) <= tol) {
    if (residual) *residual = std::abs(fhi) / mu;
    return hi;
  }
  for (int widen = 0; flo < 0 || fhi > 0; ++widen) {
    if (widen > 60) throw SolveError("never-smoker mortality: failed to bracket root");
    if (flo < 0) flo = f(lo *= 0.5);
    if (fhi > 0) fhi = f(hi *= 2.0);
  }
  double x0 = lo, f0 = flo, x1 = hi, f1 = fhi;
  for (int it = 0; it < opt.max_iterations; ++it) {
    double x2 = f1 != f0 ? x1 - f1 * (x1 - x0) / (f1 - f0) : 0.5 * (lo + hi);
    if (!(x2 > lo && x2 < hi)) x2 = 0.5 * (lo + hi);
    const double f2 = f(x2);
    if (std::abs(f2) <= tol) {
      if (residual) *residual = std::abs(f2) / mu;
      return x2;
    }
    (f2 > 0 ? lo : hi) = x2;
    x0 = x1;
    f0 = f1;
    x1 = x2;
    f1 = f2;
  }
  throw SolveError("never-smoker mortality: secant did not converge");
}

}  // namespace detail

// Static proportions: mu_N = mu / (rho_N + hC rho_C + hF rho_F).
double solve_never_mortality(double mu, const MortalityShares& rho, double hr_current, double hr_former,
                             const SecantOptions& opt = {});

// Proportions recomputed at each candidate mu_N.
double solve_never_mortality(double mu, double hr_current, double hr_former,
                             const std::function<MortalityShares(double)>& shares, const SecantOptions& opt = {},
                             double* residual = nullptr);

// Forward solver for one (sex, birth-year) cohort. Construction evaluates
// everything that depends only on initiation, quitting and switching
// (independent of mortality and hazard ratios), so one instance can be
// re-solved cheaply for different hazard ratios.
class CohortSolver {
 public:
  CohortSolver(const ModelSpec& spec, const ParameterVector& params, int birth_year, int max_age);

  CohortTrajectory solve(const MortalityTable& mortality, Sex sex, const Eigen::VectorXd& hr_current,
                         const Eigen::VectorXd& hr_former, const SecantOptions& opt = {}) const;

  int birth_year() const { return birth_year_; }
  int max_age() const { return max_age_; }
  const InitialState& initial() const { return init_; }

  // Cumulative quit hazard from the start age; negative before it.
  double cumulative_quit(double age) const;
  double quit_rate_at(double age) const;

 private:
  struct Year {
    std::vector<double> offset;   // node position minus the year's start age
    std::vector<double> weight;
    std::vector<double> alive_smoking;  // (C + sum Q) / (C0 e^{-M_C}) at the node
    std::vector<double> source;         // node-major: quit outflow density by group
    double current_end = 0.0;           // e^{-L(a+1)}
    std::vector<double> recent_end;     // window mass by group at a+1
  };

  double survival(double s) const;                     // e^{-L(s)}
  double quit_density(double s) const;                 // g(s)
  double window_mass(double s1, double s2, int group) const;

  ModelSpec spec_;
  int birth_year_;
  int max_age_;
  int groups_;
  double a0_, k_;
  double lambda0_ = 0.0;
  double pre_scale_ = 1.0;  // kappa: scaling of the pre-start-age quit history
  std::optional<QuitRateFunction> rate_;
  std::vector<double> breaks_;      // quit-rate kink ages
  std::vector<double> group_lo_;    // lower quit age per group
  std::vector<double> cum_int_;     // L at integer ages
  Eigen::VectorXd switch_;          // lambda_R per group (0 where disallowed)
  InitialState init_;
  std::vector<Year> years_;
};

CohortTrajectory solve_cohort(const ModelSpec& spec, const ParameterVector& params, const MortalityTable& mortality,
                              Sex sex, int birth_year, std::optional<int> max_age = std::nullopt,
                              const SecantOptions& opt = {});

struct CellKey {
  Sex sex = Sex::female;
  int age = 0;
  int birth_year = 0;
};

// Model probabilities for one survey cell: (never incl. reporting-as-never,
// current incl. recent quitters, ex) plus the ex-smoker split by age-at-quit
// group (as absolute probabilities summing to triple[2]).
struct CellProbabilities {
  std::array<double, 3> triple{1.0, 0.0, 0.0};
  std::vector<double> former_by_group;
};

CellProbabilities cell_probabilities(const CohortTrajectory& traj, int age);

std::vector<CellProbabilities> model_proportions_map(const ModelSpec& spec, const ParameterVector& params,
                                                     const MortalityTable& mortality, std::span<const CellKey> cells);

}  // namespace cohortcal
