#include "minegp/gp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace minegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
constexpr double kMinJitterG = 1e-8;

double effective_g(double g, double* jitter_out) {
  if (g < kMinJitterG) {
    if (jitter_out != nullptr) *jitter_out = kMinJitterG;
    return g + kMinJitterG;
  }
  if (jitter_out != nullptr) *jitter_out = 0.0;
  return g;
}

// K and all dK/dtheta_j in one pass over pairs
void assemble_with_grads(const Kernel& k, const Eigen::MatrixXd& X, Eigen::MatrixXd& K,
                         std::vector<Eigen::MatrixXd>& dK) {
  const int d = static_cast<int>(X.cols());
  const Eigen::Index n = X.rows();
  const int nt = static_cast<int>(k.n_theta());
  K.resize(n, n);
  dK.assign(static_cast<size_t>(nt), Eigen::MatrixXd(n, n));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> A = X;
  std::vector<double> buf(static_cast<size_t>(nt));
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = 1.0;
    for (int t = 0; t < nt; ++t) dK[static_cast<size_t>(t)](j, j) = 0.0;
    const double* bj = A.data() + j * d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double c = detail::corr_grad(k, A.data() + i * d, bj, d, buf.data());
      K(i, j) = c;
      K(j, i) = c;
      for (int t = 0; t < nt; ++t) {
        dK[static_cast<size_t>(t)](i, j) = buf[static_cast<size_t>(t)];
        dK[static_cast<size_t>(t)](j, i) = buf[static_cast<size_t>(t)];
      }
    }
  }
}

struct FactorizedState {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
  double q = 0.0;       // y' A^{-1} y
  double tau2 = 0.0;
  double logdet = 0.0;  // log |K + g_eff I|
  double profll = 0.0;
  double jitter = 0.0;
  bool ok = false;
};

// shared evaluation core; throws DegenerateScaleError on tau2 < 1e-12
FactorizedState factorize_profile(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, Eigen::MatrixXd* K_out,
                                  std::vector<Eigen::MatrixXd>* dK_out) {
  FactorizedState st;
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K;
  if (dK_out != nullptr) {
    assemble_with_grads(kernel, X, K, *dK_out);
  } else {
    K = kernel_matrix_sym(kernel, X);
  }
  Eigen::MatrixXd A = K;
  if (K_out != nullptr) *K_out = std::move(K);
  A.diagonal().array() += effective_g(g, &st.jitter);
  st.llt.compute(A);
  if (st.llt.info() != Eigen::Success) return st;  // ok stays false
  st.alpha = st.llt.solve(y);
  st.q = y.dot(st.alpha);
  st.tau2 = st.q / static_cast<double>(n);
  if (st.tau2 < 1e-12) throw DegenerateScaleError("concentrated tau2 below 1e-12 (degenerate responses)");
  st.logdet = 2.0 * st.llt.matrixLLT().diagonal().array().log().sum();
  st.profll = -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(st.tau2) + 1.0) - 0.5 * st.logdet;
  st.ok = true;
  return st;
}

}  // namespace

Eigen::VectorXd default_theta_init(const Eigen::Ref<const Eigen::MatrixXd>& X, bool isotropic) {
  const Eigen::Index d = X.cols();
  Eigen::VectorXd per(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double r = X.col(k).maxCoeff() - X.col(k).minCoeff();
    per[k] = std::max(0.1 * r * r, 1e-3);
  }
  if (!isotropic) return per;
  return Eigen::VectorXd::Constant(1, per.mean());
}

double log_likelihood(const Hyperparams& phi, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("log_likelihood: size mismatch");
  phi.kernel.validate(X.cols());
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd A = kernel_matrix_sym(phi.kernel, X);
  double jitter = 0.0;
  A.diagonal().array() += effective_g(phi.g, &jitter);
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("log_likelihood: covariance factorization failed");
  const double q = y.dot(llt.solve(y));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(phi.tau2)) - 0.5 * logdet -
         0.5 * q / phi.tau2;
}

double concentrated_tau2(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y) {
  auto st = factorize_profile(g, kernel, X, y, nullptr, nullptr);
  if (!st.ok) throw std::runtime_error("concentrated_tau2: factorization failed");
  return st.tau2;
}

double profile_loglik(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                      const Eigen::VectorXd& y) {
  auto st = factorize_profile(g, kernel, X, y, nullptr, nullptr);
  if (!st.ok) throw std::runtime_error("profile_loglik: factorization failed");
  return st.profll;
}

Eigen::VectorXd profile_gradient(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows();
  const int nt = static_cast<int>(kernel.n_theta());
  std::vector<Eigen::MatrixXd> dK;
  auto st = factorize_profile(g, kernel, X, y, nullptr, &dK);
  if (!st.ok) throw std::runtime_error("profile_gradient: factorization failed");
  Eigen::MatrixXd Ainv = st.llt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd grad(1 + nt);
  // d/dpsi = 0.5 * (N * alpha'K'alpha / q - tr(A^{-1} K'))
  grad[0] = 0.5 * (static_cast<double>(n) * st.alpha.squaredNorm() / st.q - Ainv.trace());
  for (int t = 0; t < nt; ++t) {
    const Eigen::MatrixXd& Kp = dK[static_cast<size_t>(t)];
    const double quad = st.alpha.dot(Kp * st.alpha);
    const double tr = Ainv.cwiseProduct(Kp).sum();
    grad[1 + t] = 0.5 * (static_cast<double>(n) * quad / st.q - tr);
  }
  return grad;
}

GPFit fit_mle(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpOptions& opt) {
  if (X.rows() != y.size()) throw std::invalid_argument("fit_mle: size mismatch");
  if (X.rows() < 1) throw std::invalid_argument("fit_mle: empty data");
  const Eigen::Index n = X.rows();

  Kernel kernel = opt.kernel;
  if (kernel.theta.size() == 0) kernel.theta = default_theta_init(X, false);
  for (Eigen::Index i = 0; i < kernel.theta.size(); ++i) {
    if (!(kernel.theta[i] > 0.0))
      kernel.theta[i] = default_theta_init(X, kernel.theta.size() == 1)[std::min<Eigen::Index>(
          i, X.cols() - 1)];
    kernel.theta[i] = std::clamp(kernel.theta[i], opt.theta_lo, opt.theta_hi);
  }
  kernel.validate(X.cols());
  const int nt = static_cast<int>(kernel.n_theta());
  const int ng = opt.estimate_g ? 1 : 0;

  double ymean = opt.center ? y.mean() : 0.0;
  Eigen::VectorXd yc = y.array() - ymean;

  // optimizer state cache: the accepted-point gradient call reuses the value
  // factorization instead of recomputing it
  struct Cache {
    Eigen::VectorXd z;
    FactorizedState st;
    Kernel kern;
    double g = 0.0;
    bool valid = false;
  } cache;

  auto unpack = [&](const Eigen::VectorXd& z, double& g, Kernel& k) {
    k = kernel;
    int off = 0;
    if (ng) {
      g = std::exp(z[0]);
      off = 1;
    } else {
      g = opt.g_init;
    }
    for (int t = 0; t < nt; ++t) k.theta[t] = std::exp(z[off + t]);
  };

  ObjFn obj = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) -> double {
    double g;
    Kernel k;
    unpack(z, g, k);
    if (!cache.valid || cache.z != z) {
      cache.st = factorize_profile(g, k, X, yc, nullptr, nullptr);
      cache.z = z;
      cache.kern = k;
      cache.g = g;
      cache.valid = cache.st.ok;
      if (!cache.st.ok) {
        if (grad != nullptr) grad->setZero(z.size());
        return std::numeric_limits<double>::infinity();
      }
    }
    if (grad != nullptr) {
      std::vector<Eigen::MatrixXd> dK;
      Eigen::MatrixXd K;
      assemble_with_grads(k, X, K, dK);
      Eigen::MatrixXd Ainv = cache.st.llt.solve(Eigen::MatrixXd::Identity(n, n));
      grad->resize(z.size());
      int off = 0;
      const double N = static_cast<double>(n);
      if (ng) {
        const double dg = 0.5 * (N * cache.st.alpha.squaredNorm() / cache.st.q - Ainv.trace());
        (*grad)[0] = -dg * g;  // chain rule through log g, negated for minimization
        off = 1;
      }
      for (int t = 0; t < nt; ++t) {
        const Eigen::MatrixXd& Kp = dK[static_cast<size_t>(t)];
        const double quad = cache.st.alpha.dot(Kp * cache.st.alpha);
        const double tr = Ainv.cwiseProduct(Kp).sum();
        const double dth = 0.5 * (N * quad / cache.st.q - tr);
        (*grad)[off + t] = -dth * k.theta[t];
      }
    }
    return -cache.st.profll;
  };

  Eigen::VectorXd z0(ng + nt), lo(ng + nt), hi(ng + nt);
  if (ng) {
    z0[0] = std::log(std::clamp(opt.g_init, opt.g_lo, opt.g_hi));
    lo[0] = std::log(opt.g_lo);
    hi[0] = std::log(opt.g_hi);
  }
  for (int t = 0; t < nt; ++t) {
    z0[ng + t] = std::log(kernel.theta[t]);
    lo[ng + t] = std::log(opt.theta_lo);
    hi[ng + t] = std::log(opt.theta_hi);
  }

  BoxResult br = minimize_box(obj, z0, lo, hi, opt.opt);

  GPFit fit;
  unpack(br.x, fit.phi.g, fit.phi.kernel);
  auto st = factorize_profile(fit.phi.g, fit.phi.kernel, X, yc, nullptr, nullptr);
  if (!st.ok) throw std::runtime_error("fit_mle: factorization failed at optimum");
  fit.phi.tau2 = st.tau2;
  fit.X = X;
  fit.y = std::move(yc);
  fit.ymean = ymean;
  fit.chol = std::move(st.llt);
  fit.alpha = std::move(st.alpha);
  fit.loglik = st.profll;
  fit.iters = br.iters;
  fit.fevals = br.fevals;
  fit.converged = br.converged;
  fit.jitter = st.jitter;
  fit.g_at_lower = std::fabs(fit.phi.g - opt.g_lo) <= 1e-6;
  return fit;
}

GPFit gp_condition(const Hyperparams& phi, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   bool center) {
  if (X.rows() != y.size()) throw std::invalid_argument("gp_condition: size mismatch");
  phi.kernel.validate(X.cols());
  GPFit fit;
  fit.phi = phi;
  fit.ymean = center ? y.mean() : 0.0;
  fit.y = y.array() - fit.ymean;
  fit.X = X;
  Eigen::MatrixXd A = kernel_matrix_sym(phi.kernel, X);
  A.diagonal().array() += effective_g(phi.g, &fit.jitter);
  fit.chol.compute(A);
  if (fit.chol.info() != Eigen::Success)
    throw std::runtime_error("gp_condition: covariance factorization failed");
  fit.alpha = fit.chol.solve(fit.y);
  fit.loglik = -0.5 * static_cast<double>(X.rows()) * (kLog2Pi + std::log(phi.tau2)) -
               fit.chol.matrixLLT().diagonal().array().log().sum() -
               0.5 * fit.y.dot(fit.alpha) / phi.tau2;
  fit.converged = true;
  return fit;
}

PredictiveDistribution gp_predict(const GPFit& fit, const Eigen::MatrixXd& Xstar, bool full_cov,
                                  bool include_noise) {
  if (Xstar.cols() != fit.X.cols()) throw std::invalid_argument("gp_predict: dimension mismatch");
  PredictiveDistribution out;
  const Eigen::MatrixXd Ks = kernel_matrix(fit.phi.kernel, Xstar, fit.X);  // n' x n
  out.mean = (Ks * fit.alpha).array() + fit.ymean;
  // W = L^{-1} Ks'
  Eigen::MatrixXd W = fit.chol.matrixL().solve(Ks.transpose());
  const double tau2 = fit.phi.tau2;
  const double noise = include_noise ? tau2 * fit.phi.g : 0.0;
  const Eigen::VectorXd w2 = W.colwise().squaredNorm().transpose();
  out.var = (tau2 * (1.0 - w2.array()).max(0.0) + noise).matrix();
  if (full_cov) {
    Eigen::MatrixXd C = tau2 * (kernel_matrix_sym(fit.phi.kernel, Xstar) - W.transpose() * W);
    C = 0.5 * (C + C.transpose()).eval();
    C.diagonal() = C.diagonal().cwiseMax(0.0);
    C.diagonal().array() += noise;
    out.cov = std::move(C);
    // keep the reported diagonal and the pointwise variances identical
    out.var = out.cov->diagonal();
  }
  return out;
}

}  // namespace minegp
