#include "cohortcal/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace cohortcal {

void append_gauss_nodes(double a, double b, std::span<const double> breaks,
                        std::vector<QuadNode>& out) {
  auto panel = [&out](double lo, double hi) {
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (std::size_t i = 0; i < 5; ++i)
      out.push_back({mid + half * GaussLegendre5::nodes[i], half * GaussLegendre5::weights[i]});
  };
  double lo = a;
  for (double x : breaks) {
    if (x <= lo) continue;
    if (x >= b) break;
    panel(lo, x);
    lo = x;
  }
  panel(lo, b);
}

namespace {

double moment_series(int n, double c) {
  double sum = 0.0;
  double power = 1.0;  // (-c)^k / k!
  for (int k = 0; k < 80; ++k) {
    const double term = power / (k + n + 1);
    sum += term;
    if (k > 2 && std::abs(term) < 1e-18 * std::abs(sum)) break;
    power *= -c / (k + 1);
  }
  return sum;
}

}  // namespace

double exp_moment(int n, double c) {
  if (n == 0) return c == 0.0 ? 1.0 : -std::expm1(-c) / c;
  if (std::abs(c) < 2.0) return moment_series(n, c);
  const double e = std::exp(-c);
  double value = -std::expm1(-c) / c;
  for (int k = 1; k <= n; ++k) value = (k * value - e) / c;
  return value;
}

double transfer_kernel(double r, double m, double T) {
  const double lo = std::min(r, m);
  return T * std::exp(-lo * T) * phi1(std::abs(r - m) * T);
}

double exp_divided_difference2(double a, double b) {
  const double gap = b - a;
  if (std::abs(gap) > 1e-3) return (phi1(a) - phi1(b)) / gap;
  const double c = 0.5 * (a + b);
  const double d = 0.5 * gap;
  return exp_moment(1, c) + d * d * exp_moment(3, c) / 6.0;
}

double transfer_exposure(double r, double m, double T) {
  return T * T * exp_divided_difference2(r * T, m * T);
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace cohortcal
