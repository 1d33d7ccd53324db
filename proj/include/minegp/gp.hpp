#pragma once

#include <optional>
#include <stdexcept>

#include "minegp/kernel.hpp"
#include "minegp/optimize.hpp"

namespace minegp {

struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;                   // pointwise predictive variance
  std::optional<Eigen::MatrixXd> cov;    // full covariance when requested
};

// concentrated scale estimate fell below 1e-12 (e.g. all-zero responses)
struct DegenerateScaleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GpOptions {
  // kernel.family/p/nu select the family; kernel.theta is the optimizer init
  // (size 1 isotropic, size d ARD, size 0 = ARD with automatic init).
  // Nonpositive init entries are replaced by default_theta_init values.
  Kernel kernel;
  double g_init = 0.1;
  bool estimate_g = true;
  double g_lo = 1e-6, g_hi = 1e4;
  double theta_lo = 1e-6, theta_hi = 1e4;
  bool center = true;  // subtract the response mean before fitting
  BoxOptions opt{};

  GpOptions() { kernel.theta.resize(0); }
};

struct GPFit {
  Hyperparams phi;        // MLE (or fixed) hyperparameters, tau2 included
  Eigen::MatrixXd X;
  Eigen::VectorXd y;      // centered responses the fit used
  double ymean = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol;  // factor of (K + g_eff I), correlation scale
  Eigen::VectorXd alpha;             // (K + g_eff I)^{-1} y
  double loglik = 0.0;    // log likelihood of phi on (X, y)
  int iters = 0;
  int fevals = 0;
  bool converged = false;
  double jitter = 0.0;    // amount added to g for factorization when g ~ 0
  bool g_at_lower = false;
};

// 0.1 * (coordinate range)^2 per coordinate (mean across coordinates when isotropic)
Eigen::VectorXd default_theta_init(const Eigen::Ref<const Eigen::MatrixXd>& X, bool isotropic);

// Full MVN log likelihood of zero-mean y under Sigma = tau2 (K + g I).
double log_likelihood(const Hyperparams& phi, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// tau2_hat = y' (K+gI)^{-1} y / N; throws DegenerateScaleError below 1e-12.
double concentrated_tau2(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y);

// Log likelihood with tau2 concentrated out.
double profile_loglik(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                      const Eigen::VectorXd& y);

// (d/dg, d/dtheta_0, ..., d/dtheta_{t-1}) of the profile log likelihood,
// t = kernel.n_theta().
Eigen::VectorXd profile_gradient(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y);

GPFit fit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpOptions& opt = {});

// GPFit at fixed hyperparameters (no optimization); used wherever prediction
// with a known phi is needed.
GPFit gp_condition(const Hyperparams& phi, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   bool center = true);

// MVN conditioning. include_noise adds tau2*g to the predictive diagonal
// (predicting noisy observations, the default convention).
PredictiveDistribution gp_predict(const GPFit& fit, const Eigen::MatrixXd& Xstar,
                                  bool full_cov = false, bool include_noise = true);

}  // namespace minegp
