#pragma once

#include <Eigen/Dense>
#include <functional>

namespace minegp {

// Objective callback: returns f(x); when grad != nullptr it must also fill the
// gradient. Returning +inf signals an infeasible/failed evaluation, which the
// line search treats as "step too long".
using ObjFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd* grad)>;

struct BoxOptions {
  int max_iters = 500;
  double gtol = 1e-5;      // projected-gradient infinity norm
  int max_fevals = 10000;
  int max_ls_steps = 40;   // backtracking halvings
};

struct BoxResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iters = 0;
  int fevals = 0;
  bool converged = false;
};

// Projected BFGS minimization subject to lo <= x <= hi. Components whose
// gradient pushes outward at an active bound are frozen for the step; the
// backtracking Armijo search projects trial points into the box. Deterministic.
BoxResult minimize_box(const ObjFn& fn, Eigen::VectorXd x0, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, const BoxOptions& opt = {});

// Wrap a value-only function with central finite differences (relative step).
ObjFn with_fd_gradient(std::function<double(const Eigen::VectorXd&)> f, double rel_step = 1e-6);

}  // namespace minegp
