#include "cohortcal/optimize.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "cohortcal/errors.hpp"

namespace cohortcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  } catch (const SolveError&) {
    return kInf;
  }
}

void extrapolate(std::vector<double>& a) {
  const int r = static_cast<int>(a.size());
  for (int m = 1; m < r; ++m) {
    const double p = std::pow(4.0, m);
    for (int k = 0; k < r - m; ++k) a[k] = (a[k + 1] * p - a[k]) / (p - 1.0);
  }
}

}  // namespace

Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    y[i] = x[i] + h;
    const double fp = safe_eval(f, y);
    y[i] = x[i] - h;
    const double fm = safe_eval(f, y);
    y[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd richardson_hessian(const Objective& f, const Eigen::VectorXd& x, const HessianOptions& opt) {
  const Eigen::Index n = x.size();
  const double f0 = safe_eval(f, x);
  if (!std::isfinite(f0)) throw ValidationError("Hessian requested at a point with a non-finite objective");
  Eigen::VectorXd h0(n);
  for (Eigen::Index i = 0; i < n; ++i)
    h0[i] = std::abs(opt.d * x[i]) + (std::abs(x[i]) < opt.zero_tol ? opt.eps : 0.0);
  Eigen::MatrixXd H(n, n);
  std::vector<double> a(static_cast<std::size_t>(opt.r));
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    double h = h0[i];
    for (int k = 0; k < opt.r; ++k) {
      y[i] = x[i] + h;
      const double f1 = safe_eval(f, y);
      y[i] = x[i] - h;
      const double f2 = safe_eval(f, y);
      y[i] = x[i];
      a[static_cast<std::size_t>(k)] = (f1 - 2.0 * f0 + f2) / (h * h);
      h /= opt.v;
    }
    extrapolate(a);
    H(i, i) = a[0];
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      double hi = h0[i], hj = h0[j];
      for (int k = 0; k < opt.r; ++k) {
        y[i] = x[i] + hi;
        y[j] = x[j] + hj;
        const double f1 = safe_eval(f, y);
        y[i] = x[i] - hi;
        y[j] = x[j] - hj;
        const double f2 = safe_eval(f, y);
        y[i] = x[i];
        y[j] = x[j];
        a[static_cast<std::size_t>(k)] =
            (f1 - 2.0 * f0 + f2 - H(i, i) * hi * hi - H(j, j) * hj * hj) / (2.0 * hi * hj);
        hi /= opt.v;
        hj /= opt.v;
      }
      extrapolate(a);
      H(i, j) = H(j, i) = a[0];
    }
  if (!H.allFinite()) throw SolveError("finite-difference Hessian is not finite");
  return H;
}

bool sr1_update(Eigen::MatrixXd& B, const Eigen::VectorXd& s, const Eigen::VectorXd& y, double skip_tol) {
  const Eigen::VectorXd r = y - B * s;
  const double denom = r.dot(s);
  if (!(std::abs(denom) >= skip_tol * s.norm() * r.norm()) || r.norm() == 0.0) return false;
  B.noalias() += r * r.transpose() / denom;
  return true;
}

MinimizeResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const MinimizeOptions& opt) {
  MinimizeResult res;
  long evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return safe_eval(f, x);
  };
  auto grad = [&](const Eigen::VectorXd& x) {
    evals += 2 * x.size();
    return central_gradient(f, x, opt.gradient_step);
  };
  const Eigen::Index n = x0.size();
  Eigen::VectorXd x = x0;
  double fx = eval(x);
  if (!std::isfinite(fx)) throw ValidationError("optimizer start has a non-finite objective");
  Eigen::VectorXd g = grad(x);
  Eigen::MatrixXd Hinv = opt.inverse_hessian ? *opt.inverse_hessian : Eigen::MatrixXd::Identity(n, n);
  bool scaled = opt.inverse_hessian.has_value();
  int small_steps = 0;
  res.message = "iteration limit reached";
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() <= opt.grad_tol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      res.message = "gradient tolerance met";
      break;
    }
    Eigen::VectorXd p = -Hinv * g;
    double slope = g.dot(p);
    if (!(slope < 0)) {
      Hinv.setIdentity();
      p = -g;
      slope = g.dot(p);
    }
    double alpha = 1.0;
    double fn = kInf;
    Eigen::VectorXd xn;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + alpha * p;
      fn = eval(xn);
      if (fn <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.message = "line search failed";
      res.converged = g.cwiseAbs().maxCoeff() <= 1e3 * opt.grad_tol * std::max(1.0, std::abs(fx));
      break;
    }
    const Eigen::VectorXd gn = grad(xn);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      if (!scaled) {
        Hinv = Eigen::MatrixXd::Identity(n, n) * (sy / yv.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n) - rho * yv * s.transpose();
      Hinv = V.transpose() * Hinv * V + rho * s * s.transpose();
    }
    const double decrease = fx - fn;
    x = xn;
    g = gn;
    fx = fn;
    small_steps = decrease <= opt.f_tol * std::max(1.0, std::abs(fx)) ? small_steps + 1 : 0;
    if (small_steps >= 2) {
      ++it;
      res.converged = true;
      res.message = "objective change tolerance met";
      break;
    }
  }
  res.x = x;
  res.f = fx;
  res.gradient = g;
  res.iterations = it;
  res.evaluations = evals;
  return res;
}

}  // namespace cohortcal
