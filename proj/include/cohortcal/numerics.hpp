#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace cohortcal {

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Five-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre5 {
  static constexpr std::array<double, 5> nodes{
      -0.9061798459386639927976269, -0.5384693101056830910363144, 0.0,
      0.5384693101056830910363144, 0.9061798459386639927976269};
  static constexpr std::array<double, 5> weights{
      0.2369268850561890875142640, 0.4786286704993664680412915,
      0.5688888888888888888888889, 0.4786286704993664680412915,
      0.2369268850561890875142640};
};

template <class F>
double gauss_legendre(F&& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    sum += GaussLegendre5::weights[i] * f(mid + half * GaussLegendre5::nodes[i]);
  return sum * half;
}

// Composite rule over [a, b] with extra panel boundaries at `breaks`
// (which must be sorted; entries outside (a, b) are ignored).
template <class F>
double gauss_legendre_split(F&& f, double a, double b, std::span<const double> breaks) {
  double sum = 0.0;
  double lo = a;
  for (double x : breaks) {
    if (x <= lo) continue;
    if (x >= b) break;
    sum += gauss_legendre(f, lo, x);
    lo = x;
  }
  return sum + gauss_legendre(f, lo, b);
}

struct QuadNode {
  double x;
  double w;
};

// Appends Gauss-Legendre nodes for each panel of [a, b] cut at `breaks`.
void append_gauss_nodes(double a, double b, std::span<const double> breaks,
                        std::vector<QuadNode>& out);

// I_n(c) = \int_0^1 t^n e^{-c t} dt, n in {0, 1, 3}, stable for all finite c.
double exp_moment(int n, double c);

// (1 - e^{-x}) / x with the removable singularity filled in.
inline double phi1(double x) { return exp_moment(0, x); }

// Survival-weighted exposure of a unit mass decaying at rate r over [0, T].
inline double decay_exposure(double r, double T) { return T * phi1(r * T); }

// \int_0^T e^{-r (T - s)} e^{-m s} ds: a mass flowing at unit rate through a
// compartment left at rate r into one left at rate m.
double transfer_kernel(double r, double m, double T);

// \int_0^T transfer_kernel(r, m, y) dy.
double transfer_exposure(double r, double m, double T);

// Second divided difference of exp(-z) at {0, a, b}.
double exp_divided_difference2(double a, double b);

// Order-independent summation helper.
double pairwise_sum(std::span<const double> v);

}  // namespace cohortcal
