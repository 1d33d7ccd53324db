#include "minegp/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace minegp {

void Kernel::validate(Eigen::Index d) const {
  if (family == KernelFamily::PowerExp) {
    if (!(p > 0.0) || p > 2.0) throw std::invalid_argument("Kernel: p must be in (0,2]");
  } else {
    if (nu != 1.5 && nu != 2.5) throw std::invalid_argument("Kernel: nu must be 1.5 or 2.5");
  }
  if (theta.size() != 1 && theta.size() != d)
    throw std::invalid_argument("Kernel: lengthscale count must be 1 or d");
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    if (!(theta[i] > 0.0)) throw std::invalid_argument("Kernel: nonpositive lengthscale");
}

Kernel Kernel::gaussian(double th) { return gaussian(Eigen::VectorXd::Constant(1, th)); }
Kernel Kernel::gaussian(Eigen::VectorXd th) {
  Kernel k;
  k.family = KernelFamily::PowerExp;
  k.p = 2.0;
  k.theta = std::move(th);
  return k;
}
Kernel Kernel::powerexp(double p, double th) { return powerexp(p, Eigen::VectorXd::Constant(1, th)); }
Kernel Kernel::powerexp(double p, Eigen::VectorXd th) {
  if (!(p > 0.0) || p > 2.0) throw std::invalid_argument("Kernel: p must be in (0,2]");
  Kernel k;
  k.family = KernelFamily::PowerExp;
  k.p = p;
  k.theta = std::move(th);
  return k;
}
Kernel Kernel::matern(double nu, double th) { return matern(nu, Eigen::VectorXd::Constant(1, th)); }
Kernel Kernel::matern(double nu, Eigen::VectorXd th) {
  if (nu != 1.5 && nu != 2.5) throw std::invalid_argument("Kernel: nu must be 1.5 or 2.5");
  Kernel k;
  k.family = KernelFamily::Matern;
  k.nu = nu;
  k.theta = std::move(th);
  return k;
}

namespace detail {

double corr(const Kernel& k, const double* a, const double* b, int d) {
  if (k.family == KernelFamily::PowerExp) {
    double s = 0.0;
    if (k.p == 2.0) {
      if (k.theta.size() == 1) {
        double q = 0.0;
        for (int j = 0; j < d; ++j) {
          const double di = a[j] - b[j];
          q += di * di;
        }
        s = q / k.theta[0];
      } else {
        for (int j = 0; j < d; ++j) {
          const double di = a[j] - b[j];
          s += di * di / k.theta[j];
        }
      }
    } else {
      for (int j = 0; j < d; ++j) {
        s += std::pow(std::fabs(a[j] - b[j]), k.p) / k.theta_at(j);
      }
    }
    return std::exp(-s);
  }
  // Matern
  double r2 = 0.0;
  if (k.theta.size() == 1) {
    double q = 0.0;
    for (int j = 0; j < d; ++j) {
      const double di = a[j] - b[j];
      q += di * di;
    }
    r2 = q / k.theta[0];
  } else {
    for (int j = 0; j < d; ++j) {
      const double di = a[j] - b[j];
      r2 += di * di / k.theta[j];
    }
  }
  const double arg = std::sqrt(2.0 * k.nu * r2);
  if (k.nu == 1.5) return (1.0 + arg) * std::exp(-arg);
  return (1.0 + arg + arg * arg / 3.0) * std::exp(-arg);
}

double corr_grad(const Kernel& k, const double* a, const double* b, int d, double* dtheta_out) {
  const int nt = static_cast<int>(k.theta.size());
  if (k.family == KernelFamily::PowerExp) {
    double s = 0.0;
    double acc[1] = {0.0};  // isotropic accumulator of |d|^p
    for (int j = 0; j < d; ++j) {
      const double adj = std::fabs(a[j] - b[j]);
      const double pw = (k.p == 2.0) ? adj * adj : std::pow(adj, k.p);
      if (nt == 1) {
        acc[0] += pw;
      } else {
        dtheta_out[j] = pw;  // staged: |d_j|^p
      }
      s += pw / k.theta_at(j);
    }
    const double c = std::exp(-s);
    if (nt == 1) {
      dtheta_out[0] = c * acc[0] / (k.theta[0] * k.theta[0]);
    } else {
      for (int j = 0; j < d; ++j) dtheta_out[j] = c * dtheta_out[j] / (k.theta[j] * k.theta[j]);
    }
    return c;
  }
  // Matern: a_ = sqrt(2 nu) r, dk/da_ known closed forms
  double r2 = 0.0;
  for (int j = 0; j < d; ++j) {
    const double di = a[j] - b[j];
    const double q = di * di;
    if (nt != 1) dtheta_out[j] = q;  // staged: d_j^2
    r2 += q / k.theta_at(j);
  }
  const double arg = std::sqrt(2.0 * k.nu * r2);
  const double e = std::exp(-arg);
  double c, dkda;
  if (k.nu == 1.5) {
    c = (1.0 + arg) * e;
    dkda = -arg * e;
  } else {
    c = (1.0 + arg + arg * arg / 3.0) * e;
    dkda = -(arg * (1.0 + arg) / 3.0) * e;
  }
  if (arg <= 0.0) {
    for (int j = 0; j < nt; ++j) dtheta_out[j] = 0.0;
    return c;
  }
  // da/dtheta_j = -sqrt(2 nu) d_j^2 / (2 r theta_j^2) = -nu d_j^2 / (arg theta_j^2)
  if (nt == 1) {
    // r2 = D2/theta => da/dtheta = -arg/(2 theta)
    dtheta_out[0] = dkda * (-arg / (2.0 * k.theta[0]));
  } else {
    for (int j = 0; j < d; ++j) {
      dtheta_out[j] = dkda * (-k.nu * dtheta_out[j] / (arg * k.theta[j] * k.theta[j]));
    }
  }
  return c;
}

}  // namespace detail

double kernel_eval(const Kernel& k, const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2) {
  if (x1.size() != x2.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  k.validate(x1.size());
  // Ref columns may be strided; copy through compact buffers only if needed
  if (x1.innerStride() == 1 && x2.innerStride() == 1)
    return detail::corr(k, x1.data(), x2.data(), static_cast<int>(x1.size()));
  Eigen::VectorXd a = x1, b = x2;
  return detail::corr(k, a.data(), b.data(), static_cast<int>(a.size()));
}

Eigen::MatrixXd kernel_matrix(const Kernel& k, const Eigen::Ref<const Eigen::MatrixXd>& X1,
                              const Eigen::Ref<const Eigen::MatrixXd>& X2) {
  if (X1.cols() != X2.cols()) throw std::invalid_argument("kernel_matrix: dimension mismatch");
  k.validate(X1.cols());
  const int d = static_cast<int>(X1.cols());
  const Eigen::Index n1 = X1.rows(), n2 = X2.rows();
  // row-major copies make per-point coordinates contiguous
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> A = X1, B = X2;
  Eigen::MatrixXd K(n1, n2);
  for (Eigen::Index j = 0; j < n2; ++j) {
    const double* bj = B.data() + j * d;
    for (Eigen::Index i = 0; i < n1; ++i) {
      K(i, j) = detail::corr(k, A.data() + i * d, bj, d);
    }
  }
  return K;
}

Eigen::MatrixXd kernel_matrix_sym(const Kernel& k, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  k.validate(X.cols());
  const int d = static_cast<int>(X.cols());
  const Eigen::Index n = X.rows();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> A = X;
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = 1.0;
    const double* bj = A.data() + j * d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = detail::corr(k, A.data() + i * d, bj, d);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

Eigen::MatrixXd kernel_grad_theta(const Kernel& k, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  int coord) {
  k.validate(X.cols());
  if (coord < 0 || coord >= k.n_theta())
    throw std::invalid_argument("kernel_grad_theta: coord out of range");
  const int d = static_cast<int>(X.cols());
  const Eigen::Index n = X.rows();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> A = X;
  Eigen::MatrixXd G(n, n);
  std::vector<double> buf(static_cast<size_t>(k.n_theta()));
  for (Eigen::Index j = 0; j < n; ++j) {
    G(j, j) = 0.0;
    const double* bj = A.data() + j * d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      detail::corr_grad(k, A.data() + i * d, bj, d, buf.data());
      G(i, j) = buf[static_cast<size_t>(coord)];
      G(j, i) = G(i, j);
    }
  }
  return G;
}

CovMatrix cov_assemble(const Hyperparams& phi, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (!(phi.tau2 > 0.0)) throw std::invalid_argument("cov_assemble: tau2 must be > 0");
  if (phi.g < 0.0) throw std::invalid_argument("cov_assemble: g must be >= 0");
  CovMatrix out;
  out.sigma = phi.tau2 * kernel_matrix_sym(phi.kernel, X);
  out.sigma.diagonal().setConstant(phi.tau2 * (1.0 + phi.g));
  out.includes_nugget = true;
  return out;
}

Eigen::MatrixXd cov_cross(const Hyperparams& phi, const Eigen::Ref<const Eigen::MatrixXd>& X1,
                          const Eigen::Ref<const Eigen::MatrixXd>& X2) {
  return phi.tau2 * kernel_matrix(phi.kernel, X1, X2);
}

}  // namespace minegp
