#include "minegp/optimize.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace minegp {

namespace {

Eigen::VectorXd clamp_box(Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// gradient components that cannot produce feasible descent are zeroed
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  const double eps = 1e-12;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] <= lo[i] + eps * (1.0 + std::fabs(lo[i])) && g[i] > 0.0) pg[i] = 0.0;
    if (x[i] >= hi[i] - eps * (1.0 + std::fabs(hi[i])) && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

}  // namespace

BoxResult minimize_box(const ObjFn& fn, Eigen::VectorXd x0, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, const BoxOptions& opt) {
  const Eigen::Index n = x0.size();
  if (lo.size() != n || hi.size() != n)
    throw std::invalid_argument("minimize_box: bound size mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(lo[i] <= hi[i])) throw std::invalid_argument("minimize_box: lo > hi");

  BoxResult res;
  res.x = clamp_box(std::move(x0), lo, hi);
  Eigen::VectorXd g(n);
  res.f = fn(res.x, &g);
  res.fevals = 1;
  if (!std::isfinite(res.f)) throw std::runtime_error("minimize_box: objective not finite at start");
  res.grad = g;

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);  // inverse Hessian approximation
  const double c1 = 1e-4;

  for (res.iters = 0; res.iters < opt.max_iters; ++res.iters) {
    Eigen::VectorXd pg = projected_gradient(res.x, g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() < opt.gtol) {
      res.converged = true;
      break;
    }

    // search direction, frozen on the active set
    Eigen::VectorXd d = -(H * g);
    for (Eigen::Index i = 0; i < n; ++i)
      if (pg[i] == 0.0 && g[i] != 0.0) d[i] = 0.0;
    if (d.dot(g) >= -1e-14 * d.norm() * g.norm()) {
      H.setIdentity();
      d = -pg;
    }
    if (d.lpNorm<Eigen::Infinity>() == 0.0) {
      res.converged = true;
      break;
    }

    // projected backtracking line search (Armijo on the projected step);
    // gradient is evaluated only at the accepted point
    double alpha = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new, g_new(n);
    bool accepted = false;
    for (int ls = 0; ls < opt.max_ls_steps; ++ls) {
      x_new = clamp_box(res.x + alpha * d, lo, hi);
      Eigen::VectorXd step = x_new - res.x;
      if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = fn(x_new, nullptr);
      ++res.fevals;
      if (std::isfinite(f_new) && f_new <= res.f + c1 * g.dot(step)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
      if (res.fevals >= opt.max_fevals) break;
    }
    if (!accepted) {
      // try pure projected steepest descent once before giving up
      bool fallback = false;
      alpha = 1.0 / std::max(1.0, pg.lpNorm<Eigen::Infinity>());
      for (int ls = 0; ls < opt.max_ls_steps; ++ls) {
        x_new = clamp_box(res.x - alpha * pg, lo, hi);
        Eigen::VectorXd step = x_new - res.x;
        if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
        f_new = fn(x_new, nullptr);
        ++res.fevals;
        if (std::isfinite(f_new) && f_new < res.f) {
          fallback = true;
          break;
        }
        alpha *= 0.5;
        if (res.fevals >= opt.max_fevals) break;
      }
      if (!fallback) break;  // no progress possible; stop with best iterate
      H.setIdentity();
    }

    f_new = fn(x_new, &g_new);
    ++res.fevals;

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd yv = g_new - g;
    res.x = x_new;
    res.f = f_new;
    g = g_new;
    res.grad = g;

    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      // BFGS update of the inverse Hessian
      const double rho = 1.0 / sy;
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      Eigen::MatrixXd V = I - rho * s * yv.transpose();
      H = V * H * V.transpose() + rho * s * s.transpose();
    }
    if (res.fevals >= opt.max_fevals) break;
  }

  if (!res.converged) {
    Eigen::VectorXd pg = projected_gradient(res.x, g, lo, hi);
    res.converged = pg.lpNorm<Eigen::Infinity>() < opt.gtol;
  }
  return res;
}

ObjFn with_fd_gradient(std::function<double(const Eigen::VectorXd&)> f, double rel_step) {
  return [f = std::move(f), rel_step](const Eigen::VectorXd& x, Eigen::VectorXd* grad) -> double {
    const double fx = f(x);
    if (grad != nullptr) {
      grad->resize(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = rel_step * std::max(1.0, std::fabs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        (*grad)[i] = (f(xp) - f(xm)) / (2.0 * h);
      }
    }
    return fx;
  };
}

}  // namespace minegp
