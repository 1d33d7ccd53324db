#include "minegp/lagp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "minegp/rng.hpp"

namespace minegp {

namespace {

GpOptions local_options(const LagpConfig& cfg, int d) {
  GpOptions opt;
  opt.kernel = cfg.kernel;
  if (cfg.local_isotropic) {
    if (opt.kernel.theta.size() != 1) opt.kernel.theta = Eigen::VectorXd::Constant(1, -1.0);
  } else {
    if (opt.kernel.theta.size() != d) opt.kernel.theta.resize(0);  // ARD, automatic init
  }
  opt.g_init = cfg.g_init;
  opt.g_lo = cfg.g_lo;
  opt.g_hi = cfg.g_hi;
  opt.theta_lo = cfg.theta_lo;
  opt.theta_hi = cfg.theta_hi;
  opt.center = false;  // responses arrive globally centered
  return opt;
}

// One site against pre-centered responses. Never throws; failures land in
// error_code so a batch can keep going.
LocalFit predict_site(const Eigen::MatrixXd& X, const Eigen::VectorXd& yc, double ymean,
                      const SpatialIndex& idx, const Eigen::VectorXd& x,
                      const LagpConfig& cfg) {
  LocalFit out;
  out.site = x;
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int m = std::min(cfg.m, n);

  try {
    if (cfg.method == NeighborhoodMethod::ALC && m > cfg.n0 && m < n) {
      // score candidates under a reference correlation at the neighborhood's
      // own scale (responses never enter the selection)
      std::vector<int> nearest = idx.knn(x, m);
      double d2 = 0.0;
      for (int j : nearest) d2 += (X.row(j).transpose() - x).squaredNorm();
      d2 /= m;
      Hyperparams ref;
      ref.tau2 = 1.0;
      ref.g = 0.01;
      ref.kernel = gaussian_kernel(std::max(d2, 1e-12));
      out.neighborhood = alc_select(X, idx, x, m, cfg.n0, cfg.cand_limit, ref);
    } else {
      out.neighborhood = nn_search(idx, x, m);
    }

    const int k = static_cast<int>(out.neighborhood.indices.size());
    Eigen::MatrixXd Xnb(k, d);
    Eigen::VectorXd ynb(k);
    for (int i = 0; i < k; ++i) {
      Xnb.row(i) = X.row(out.neighborhood.indices[i]);
      ynb[i] = yc[out.neighborhood.indices[i]];
    }

    GPFit fit;
    try {
      fit = fit_mle(Xnb, ynb, local_options(cfg, d));
    } catch (const std::exception&) {
      // retry with a stronger nugget floor before giving up on the site
      GpOptions opt = local_options(cfg, d);
      opt.g_lo = std::max(cfg.g_lo, 1e-4);
      opt.g_init = std::max(cfg.g_init, 1e-2);
      fit = fit_mle(Xnb, ynb, opt);
    }
    PredictiveDistribution pd = gp_predict(fit, x.transpose(), false, cfg.include_noise);
    out.phi_hat = fit.phi;
    out.mean = pd.mean[0] + ymean;
    out.var = pd.var[0];
    out.nugget_at_bound = fit.g_at_lower;
  } catch (const std::exception&) {
    out.error_code = 1;
    out.mean = std::numeric_limits<double>::quiet_NaN();
    out.var = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace

LocalFit lagp_predict_one(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                          const Eigen::VectorXd& x, const LagpConfig& cfg) {
  if (X.rows() < 1) throw std::invalid_argument("lagp_predict_one: empty training set");
  SpatialIndex idx(X);
  const double ymean = Y.mean();
  return predict_site(X, Y.array() - ymean, ymean, idx, x, cfg);
}

LagpResult lagp_predict_batch(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              const Eigen::MatrixXd& Xstar, const LagpConfig& cfg) {
  if (X.rows() < 1) throw std::invalid_argument("lagp_predict_batch: empty training set");
  if (X.cols() != Xstar.cols()) throw std::invalid_argument("lagp_predict_batch: dimension mismatch");
  const int ns = static_cast<int>(Xstar.rows());

  SpatialIndex idx(X);
  const double ymean = Y.mean();
  const Eigen::VectorXd yc = Y.array() - ymean;

  LagpResult out;
  out.fits.resize(ns);
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < ns; ++s)
    out.fits[s] = predict_site(X, yc, ymean, idx, Xstar.row(s).transpose(), cfg);

  out.pred.mean.resize(ns);
  out.pred.var.resize(ns);
  for (int s = 0; s < ns; ++s) {
    out.pred.mean[s] = out.fits[s].mean;
    out.pred.var[s] = out.fits[s].var;
  }
  return out;
}

LagpResult slagp_predict_batch(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                               const Eigen::MatrixXd& Xstar, const LagpConfig& cfg,
                               const GlobalScales* scales) {
  GlobalScales sc;
  if (scales) {
    sc = *scales;
  } else {
    RngStream rng = RngStream(cfg.seed).substream("slagp.scales");
    Kernel proto = cfg.kernel;
    sc = estimate_global_lengthscales(X, Y, cfg.scale_blocks, cfg.scale_block_size, proto, rng);
  }
  if (sc.theta.size() != 1 && sc.theta.size() != X.cols())
    throw std::invalid_argument("slagp_predict_batch: scale vector does not match input dimension");

  const Eigen::MatrixXd Xs = prescale_inputs(X, sc.theta);
  const Eigen::MatrixXd Xss = prescale_inputs(Xstar, sc.theta);

  LagpConfig local = cfg;
  local.local_isotropic = true;  // one lengthscale suffices after scaling
  LagpResult out = lagp_predict_batch(Xs, Y, Xss, local);
  for (int s = 0; s < Xstar.rows(); ++s) out.fits[s].site = Xstar.row(s).transpose();
  out.scales = sc;
  out.prescaled = true;
  return out;
}

std::vector<LocalFit> remediate_nuggets(const std::vector<LocalFit>& fits,
                                        const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                        bool include_noise) {
  std::vector<double> gs;
  for (const LocalFit& f : fits)
    if (f.error_code == 0 && !f.nugget_at_bound) gs.push_back(f.phi_hat.g);
  if (gs.empty())
    throw std::runtime_error("remediate_nuggets: every usable local nugget sits at the bound");

  std::sort(gs.begin(), gs.end());
  const size_t h = gs.size() / 2;
  const double g_med = gs.size() % 2 == 1 ? gs[h] : 0.5 * (gs[h - 1] + gs[h]);

  const double ymean = Y.mean();
  const int d = static_cast<int>(X.cols());

  std::vector<LocalFit> out = fits;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    LocalFit& f = out[i];
    if (f.error_code != 0 || !f.nugget_at_bound) continue;
    const int k = static_cast<int>(f.neighborhood.indices.size());
    Eigen::MatrixXd Xnb(k, d);
    Eigen::VectorXd ynb(k);
    for (int j = 0; j < k; ++j) {
      Xnb.row(j) = X.row(f.neighborhood.indices[j]);
      ynb[j] = Y[f.neighborhood.indices[j]] - ymean;
    }
    try {
      Hyperparams phi = f.phi_hat;
      phi.g = g_med;
      phi.tau2 = concentrated_tau2(g_med, phi.kernel, Xnb, ynb);
      GPFit refit = gp_condition(phi, Xnb, ynb, false);
      PredictiveDistribution pd = gp_predict(refit, f.site.transpose(), false, include_noise);
      f.phi_hat = phi;
      f.mean = pd.mean[0] + ymean;
      f.var = pd.var[0];
      f.nugget_at_bound = false;
    } catch (const std::exception&) {
      // keep the original fit rather than destroy a usable prediction
    }
  }
  return out;
}

}  // namespace minegp
