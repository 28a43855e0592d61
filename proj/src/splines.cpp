#include "cohortcal/splines.hpp"

#include <algorithm>
#include <cmath>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

KnotSet make_equispaced_knots(double lo, double hi, int n_interior) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("knot bounds must be finite");
  if (hi <= lo) throw ValidationError("knot range requires hi > lo");
  if (n_interior < 0) throw ValidationError("negative interior knot count");
  KnotSet k{{}, lo, hi};
  for (int j = 1; j <= n_interior; ++j) k.interior.push_back(lo + (hi - lo) * j / (n_interior + 1));
  return k;
}

SplineBasis::SplineBasis(KnotSet knots) : knots_(std::move(knots)) {
  if (!(knots_.hi > knots_.lo)) throw ValidationError("spline basis requires hi > lo");
  x_.push_back(knots_.lo);
  for (double k : knots_.interior) {
    if (!(k > x_.back()) || !(k < knots_.hi))
      throw ValidationError("interior knots must be strictly increasing inside (lo, hi)");
    x_.push_back(k);
  }
  x_.push_back(knots_.hi);
  df_ = static_cast<int>(x_.size()) - 1;

  // Natural spline: M = S y with M_0 = M_{K-1} = 0 and the usual tridiagonal
  // continuity equations for the interior second derivatives.
  const int K = static_cast<int>(x_.size());
  second_ = Eigen::MatrixXd::Zero(K, K);
  if (K > 2) {
    const int n = K - 2;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, K);
    for (int i = 1; i <= n; ++i) {
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      A(i - 1, i - 1) = 2.0 * (h0 + h1);
      if (i > 1) A(i - 1, i - 2) = h0;
      if (i < n) A(i - 1, i) = h1;
      R(i - 1, i - 1) += 6.0 / h0;
      R(i - 1, i) -= 6.0 / h0 + 6.0 / h1;
      R(i - 1, i + 1) += 6.0 / h1;
    }
    second_.middleRows(1, n) = A.partialPivLu().solve(R);
  }
}

SplineBasis SplineBasis::with_df(double lo, double hi, int df) {
  if (df < 0) throw ValidationError("negative spline df");
  if (df == 0) {
    SplineBasis b;
    b.knots_ = KnotSet{{}, lo, hi};
    return b;
  }
  return SplineBasis(make_equispaced_knots(lo, hi, df - 1));
}

NaturalSpline SplineBasis::bind(std::span<const double> weights) const {
  if (static_cast<int>(weights.size()) != df_) throw ValidationError("spline weight count does not match df");
  if (df_ == 0) return {};
  std::vector<double> y(x_.size(), 0.0);
  std::copy(weights.begin(), weights.end(), y.begin() + 1);
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd m = second_ * yv;
  return NaturalSpline(x_, y, std::vector<double>(m.data(), m.data() + m.size()));
}

double SplineBasis::value(double x, std::span<const double> weights) const {
  return bind(weights)(x);
}

void SplineBasis::eval_into(double x, std::span<double> out) const {
  if (static_cast<int>(out.size()) != df_) throw ValidationError("basis output length does not match df");
  std::vector<double> w(df_, 0.0);
  for (int j = 0; j < df_; ++j) {
    w[j] = 1.0;
    out[j] = bind(w)(x);
    w[j] = 0.0;
  }
}

Eigen::VectorXd SplineBasis::eval(double x) const {
  Eigen::VectorXd v(df_);
  eval_into(x, std::span<double>(v.data(), static_cast<std::size_t>(df_)));
  return v;
}

NaturalSpline::NaturalSpline(std::vector<double> x, std::vector<double> y, std::vector<double> m)
    : x_(std::move(x)), y_(std::move(y)), m_(std::move(m)) {}

double NaturalSpline::operator()(double x) const {
  const std::size_t K = x_.size();
  if (K == 0) return 0.0;
  if (x <= x_[0]) {
    const double h = x_[1] - x_[0];
    const double slope = (y_[1] - y_[0]) / h - h * (2.0 * m_[0] + m_[1]) / 6.0;
    return y_[0] + slope * (x - x_[0]);
  }
  if (x >= x_[K - 1]) {
    const double h = x_[K - 1] - x_[K - 2];
    const double slope = (y_[K - 1] - y_[K - 2]) / h + h * (m_[K - 2] + 2.0 * m_[K - 1]) / 6.0;
    return y_[K - 1] + slope * (x - x_[K - 1]);
  }
  std::size_t i = 0;
  while (i + 2 < K && x >= x_[i + 1]) ++i;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double initiation_proportion(double birth_year, const SplineCoefficients& coeffs,
                             const SplineBasis& basis) {
  const double f = basis.value(
      birth_year, std::span<const double>(coeffs.weights.data(), static_cast<std::size_t>(coeffs.weights.size())));
  return logistic(coeffs.intercept + f);
}

double quit_rate(double age, double year, const SplineCoefficients& age_coeffs,
                 const SplineBasis& age_basis, const SplineCoefficients& year_coeffs,
                 const SplineBasis& year_basis, double intercept) {
  auto span_of = [](const Eigen::VectorXd& v) {
    return std::span<const double>(v.data(), static_cast<std::size_t>(v.size()));
  };
  return std::exp(intercept + age_coeffs.intercept + age_basis.value(age, span_of(age_coeffs.weights)) +
                  year_coeffs.intercept + year_basis.value(year, span_of(year_coeffs.weights)));
}

}  // namespace cohortcal
