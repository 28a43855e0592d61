#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cohortcal {

struct KnotSet {
  std::vector<double> interior;
  double lo = 0.0;
  double hi = 1.0;
};

KnotSet make_equispaced_knots(double lo, double hi, int n_interior);

class NaturalSpline;

// Natural cubic spline basis with df = interior knots + 1 columns and no
// intercept. Column j is the natural interpolating spline that is 1 at the
// (j+1)-th knot (counting the lower boundary as knot 0) and 0 at every other
// knot, so coefficients are spline values relative to the value at `lo`.
// df = 0 is the empty basis.
class SplineBasis {
 public:
  SplineBasis() = default;
  explicit SplineBasis(KnotSet knots);
  static SplineBasis with_df(double lo, double hi, int df);

  int df() const { return df_; }
  const KnotSet& knots() const { return knots_; }
  // Boundary and interior knots in order; empty for df = 0.
  const std::vector<double>& breakpoints() const { return x_; }

  Eigen::VectorXd eval(double x) const;
  void eval_into(double x, std::span<double> out) const;
  NaturalSpline bind(std::span<const double> weights) const;
  double value(double x, std::span<const double> weights) const;

 private:
  KnotSet knots_;
  int df_ = 0;
  std::vector<double> x_;
  Eigen::MatrixXd second_;  // knot second derivatives per unit knot value
};

// A concrete spline function (one coefficient vector bound to a basis).
class NaturalSpline {
 public:
  NaturalSpline() = default;
  NaturalSpline(std::vector<double> x, std::vector<double> y, std::vector<double> m);
  double operator()(double x) const;

 private:
  std::vector<double> x_, y_, m_;
};

struct SplineCoefficients {
  double intercept = 0.0;
  Eigen::VectorXd weights;
};

double initiation_proportion(double birth_year, const SplineCoefficients& coeffs,
                             const SplineBasis& basis);

double quit_rate(double age, double year, const SplineCoefficients& age_coeffs,
                 const SplineBasis& age_basis, const SplineCoefficients& year_coeffs,
                 const SplineBasis& year_basis, double intercept);

// log quit rate = intercept + f_age(age) + f_year(year), with both splines
// pre-bound for repeated evaluation inside the cohort solver.
class QuitRateFunction {
 public:
  QuitRateFunction(double intercept, NaturalSpline age, NaturalSpline year)
      : intercept_(intercept), age_(std::move(age)), year_(std::move(year)) {}
  double log_rate(double age, double year) const { return intercept_ + age_(age) + year_(year); }
  double operator()(double age, double year) const { return std::exp(log_rate(age, year)); }

 private:
  double intercept_;
  NaturalSpline age_, year_;
};

}  // namespace cohortcal
