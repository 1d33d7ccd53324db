#pragma once

#include <Eigen/Dense>

namespace minegp {

enum class KernelFamily { PowerExp, Matern };

// Correlation kernel: family, fixed shape (p or nu), and lengthscales theta.
// theta of length 1 broadcasts to every coordinate (isotropic); length d gives
// per-coordinate (ARD) scaling.
//
// PowerExp:  k(x,x') = exp(-sum_k |x_k - x'_k|^p / theta_k); p in (0,2], p=2 is
//            the Gaussian kernel.
// Matern:    k(x,x') = closed form in a = sqrt(2 nu) * r with
//            r^2 = sum_k (x_k - x'_k)^2 / theta_k; nu in {1.5, 2.5}.
//            With equal lengthscales this is the isotropic Matern on Euclidean
//            distance, and dividing inputs by sqrt(theta_k) reproduces the ARD
//            form exactly.
struct Kernel {
  KernelFamily family = KernelFamily::PowerExp;
  double p = 2.0;   // PowerExp exponent; a fixed configuration value, never optimized
  double nu = 2.5;  // Matern smoothness, 1.5 or 2.5
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);

  bool isotropic() const { return theta.size() == 1; }
  Eigen::Index n_theta() const { return theta.size(); }
  double theta_at(Eigen::Index k) const { return theta.size() == 1 ? theta[0] : theta[k]; }
  void validate(Eigen::Index d) const;

  static Kernel gaussian(double th);
  static Kernel gaussian(Eigen::VectorXd th);
  static Kernel powerexp(double p, double th);
  static Kernel powerexp(double p, Eigen::VectorXd th);
  static Kernel matern(double nu, double th);
  static Kernel matern(double nu, Eigen::VectorXd th);
};

inline Kernel gaussian_kernel(double th) { return Kernel::gaussian(th); }
inline Kernel gaussian_kernel(Eigen::VectorXd th) { return Kernel::gaussian(std::move(th)); }
inline Kernel powerexp_kernel(double p, double th) { return Kernel::powerexp(p, th); }
inline Kernel powerexp_kernel(double p, Eigen::VectorXd th) { return Kernel::powerexp(p, std::move(th)); }
inline Kernel matern_kernel(double nu, double th) { return Kernel::matern(nu, th); }
inline Kernel matern_kernel(double nu, Eigen::VectorXd th) { return Kernel::matern(nu, std::move(th)); }

double kernel_eval(const Kernel& k, const Eigen::Ref<const Eigen::VectorXd>& x1,
                   const Eigen::Ref<const Eigen::VectorXd>& x2);

Eigen::MatrixXd kernel_matrix(const Kernel& k, const Eigen::Ref<const Eigen::MatrixXd>& X1,
                              const Eigen::Ref<const Eigen::MatrixXd>& X2);
Eigen::MatrixXd kernel_matrix_sym(const Kernel& k, const Eigen::Ref<const Eigen::MatrixXd>& X);

// dK/dtheta[coord] elementwise over X; coord indexes k.theta, so coord=0 is the
// shared lengthscale in the isotropic case.
Eigen::MatrixXd kernel_grad_theta(const Kernel& k, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  int coord);

struct Hyperparams {
  double tau2 = 1.0;  // scale
  double g = 0.0;     // nugget; noise variance is tau2*g
  Kernel kernel;
};

struct CovMatrix {
  Eigen::MatrixXd sigma;
  bool includes_nugget = true;
};

// Sigma = tau2 * (K + g I); diagonal exactly tau2*(1+g)
CovMatrix cov_assemble(const Hyperparams& phi, const Eigen::Ref<const Eigen::MatrixXd>& X);

// cross-covariance tau2 * K(X1, X2), no nugget (intended for distinct sites)
Eigen::MatrixXd cov_cross(const Hyperparams& phi, const Eigen::Ref<const Eigen::MatrixXd>& X1,
                          const Eigen::Ref<const Eigen::MatrixXd>& X2);

namespace detail {
// Low-overhead scalar evaluations over raw coordinate pointers, used by the
// hot loops (Vecchia columns, ALC). d is the input dimension.
double corr(const Kernel& k, const double* a, const double* b, int d);
// Correlation plus d(corr)/d(theta_j) for every j < k.n_theta(), written into
// dtheta_out (size n_theta). Returns the correlation.
double corr_grad(const Kernel& k, const double* a, const double* b, int d, double* dtheta_out);
}  // namespace detail

}  // namespace minegp
