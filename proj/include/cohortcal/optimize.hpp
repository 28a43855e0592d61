#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace cohortcal {

// Objectives are minimized; non-finite values and SolveError count as +inf.
using Objective = std::function<double(const Eigen::VectorXd&)>;

// Central differences with step rel_step * max(1, |x_i|).
Eigen::VectorXd central_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step = 1e-5);

// Richardson-extrapolated finite-difference Hessian with the numDeriv
// defaults: initial step d |x| (eps where x is near zero), r = 4 rounds,
// step reduction v = 2.
struct HessianOptions {
  double d = 0.01;
  double eps = 1e-4;
  double zero_tol = 1.781029e-5;  // sqrt(machine epsilon / 7e-7)
  int r = 4;
  double v = 2.0;
};
Eigen::MatrixXd richardson_hessian(const Objective& f, const Eigen::VectorXd& x, const HessianOptions& opt = {});

// Symmetric rank-one update of a Hessian approximation. Returns false and
// leaves B untouched when |r's| < skip_tol * |s| * |r|.
bool sr1_update(Eigen::MatrixXd& B, const Eigen::VectorXd& s, const Eigen::VectorXd& y, double skip_tol = 1e-8);

struct MinimizeOptions {
  int max_iterations = 500;
  double grad_tol = 1e-6;   // on |g|_inf / max(1, |f|)
  double f_tol = 1e-13;     // relative decrease, two iterations in a row
  double gradient_step = 1e-5;
  std::optional<Eigen::MatrixXd> inverse_hessian;  // initial H^{-1}; identity-scaled otherwise
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  long evaluations = 0;
  bool converged = false;
  std::string message;
};

// BFGS with an Armijo backtracking line search and finite-difference
// gradients.
MinimizeResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const MinimizeOptions& opt = {});

}  // namespace cohortcal
