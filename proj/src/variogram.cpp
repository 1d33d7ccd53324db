#include "minegp/variogram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "minegp/optimize.hpp"
#include "minegp/spatial.hpp"

namespace minegp {

namespace {

// single source of truth for the range <-> lengthscale translation
Kernel model_kernel(const VariogramModel& m) {
  Kernel k;
  k.family = m.family;
  k.p = m.p;
  k.nu = m.nu;
  double theta;
  if (m.family == KernelFamily::PowerExp && m.p != 2.0)
    theta = std::pow(m.range, m.p);
  else
    theta = m.range * m.range;
  k.theta = Eigen::VectorXd::Constant(1, theta);
  return k;
}

double model_corr(const VariogramModel& m, double h) {
  const Kernel k = model_kernel(m);
  const double zero = 0.0;
  return detail::corr(k, &zero, &h, 1);
}

}  // namespace

EmpiricalVariogram empirical_semivariogram(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                           double bin_width, double h_max) {
  const int n = static_cast<int>(X.rows());
  if (n < 2) throw std::invalid_argument("empirical_semivariogram: need at least 2 points");
  if (!(bin_width > 0.0)) throw std::invalid_argument("empirical_semivariogram: bin_width must be positive");
  if (!(h_max >= bin_width)) throw std::invalid_argument("empirical_semivariogram: h_max must cover at least one bin");

  std::vector<double> edges{0.0};
  while (edges.back() < h_max - 1e-12 * h_max)
    edges.push_back(std::min(edges.back() + bin_width, h_max));
  const int K = static_cast<int>(edges.size()) - 1;

  Eigen::VectorXd sums = Eigen::VectorXd::Zero(K);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);

  SpatialIndex idx(X);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    for (int j : idx.within_radius(xi, h_max)) {
      if (j <= i) continue;  // each unordered pair once
      const double h = (X.row(j).transpose() - xi).norm();
      // right-closed bins: first edge >= h bounds the bin from above
      const auto it = std::lower_bound(edges.begin() + 1, edges.end(), h);
      if (it == edges.end()) continue;  // numerical safety at h ~ h_max
      const int b = static_cast<int>(it - edges.begin()) - 1;
      const double dy = Y[i] - Y[j];
      sums[b] += dy * dy;
      counts[b] += 1;
    }
  }

  EmpiricalVariogram ev;
  ev.bin_edges = Eigen::Map<const Eigen::VectorXd>(edges.data(), edges.size());
  ev.bin_centers.resize(K);
  ev.gamma_hat.resize(K);
  ev.pair_counts = counts;
  for (int b = 0; b < K; ++b) {
    ev.bin_centers[b] = 0.5 * (edges[b] + edges[b + 1]);
    ev.gamma_hat[b] = counts[b] > 0 ? sums[b] / (2.0 * counts[b])
                                    : std::numeric_limits<double>::quiet_NaN();
  }
  return ev;
}

double model_semivariogram(const VariogramModel& m, double h) {
  if (h < 0.0) throw std::invalid_argument("model_semivariogram: negative distance");
  if (h == 0.0) return 0.0;
  return m.nugget_k + m.partial_sill * (1.0 - model_corr(m, h));
}

NlsFit fit_nls(const EmpiricalVariogram& ev, const VariogramModel& proto, const NlsOptions& opt) {
  std::vector<double> hs, gs, ws;
  double gmax = 0.0, hmax = 0.0;
  for (int b = 0; b < ev.bin_centers.size(); ++b) {
    if (ev.pair_counts[b] <= 0 || !std::isfinite(ev.gamma_hat[b])) continue;
    if (ev.bin_centers[b] > opt.h_max_fit) continue;
    hs.push_back(ev.bin_centers[b]);
    gs.push_back(ev.gamma_hat[b]);
    ws.push_back(opt.weights == NlsWeights::PairCount ? static_cast<double>(ev.pair_counts[b]) : 1.0);
    gmax = std::max(gmax, ev.gamma_hat[b]);
    hmax = std::max(hmax, ev.bin_centers[b]);
  }
  if (hs.size() < 3) throw std::invalid_argument("fit_nls: need at least 3 non-empty bins");
  if (gmax <= 0.0) throw std::invalid_argument("fit_nls: degenerate flat semivariogram");

  const double nug_lo = opt.nugget_lo > 0.0 ? opt.nugget_lo : 1e-4;
  const double nug_hi = opt.nugget_hi > 0.0 ? opt.nugget_hi : 10.0 * gmax;
  const double sill_lo = opt.sill_lo > 0.0 ? opt.sill_lo : 1e-8;
  const double sill_hi = opt.sill_hi > 0.0 ? opt.sill_hi : 10.0 * gmax;
  const double range_lo = opt.range_lo > 0.0 ? opt.range_lo : 1e-3 * hmax;
  const double range_hi = opt.range_hi > 0.0 ? opt.range_hi : 10.0 * hmax;

  ObjFn obj = with_fd_gradient([&](const Eigen::VectorXd& z) {
    VariogramModel m = proto;
    m.nugget_k = z[0];
    m.partial_sill = z[1];
    m.range = z[2];
    double sse = 0.0;
    for (size_t i = 0; i < hs.size(); ++i) {
      const double r = gs[i] - model_semivariogram(m, hs[i]);
      sse += ws[i] * r * r;
    }
    return sse;
  });

  Eigen::VectorXd lo(3), hi(3);
  lo << nug_lo, sill_lo, range_lo;
  hi << nug_hi, sill_hi, range_hi;

  // deterministic multistart over coarse shapes; first start from the proto
  // when its parameters are usable
  std::vector<Eigen::VectorXd> starts;
  if (proto.nugget_k > 0.0 && proto.partial_sill > 0.0 && proto.range > 0.0) {
    Eigen::VectorXd s(3);
    s << proto.nugget_k, proto.partial_sill, proto.range;
    starts.push_back(s);
  }
  for (double rf : {0.15, 0.4, 0.8}) {
    for (double nf : {0.0, 0.3}) {
      Eigen::VectorXd s(3);
      s << std::max(nug_lo, nf * gs.front()), std::max(sill_lo, gmax - nf * gs.front()), rf * hmax;
      starts.push_back(s);
    }
  }

  BoxOptions bopt;
  bopt.max_iters = 400;
  bopt.gtol = 1e-10;

  NlsFit best;
  best.sse = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& s : starts) {
    BoxResult r = minimize_box(obj, s, lo, hi, bopt);
    if (r.f < best.sse) {
      best.sse = r.f;
      best.converged = r.converged;
      best.model = proto;
      best.model.nugget_k = r.x[0];
      best.model.partial_sill = r.x[1];
      best.model.range = r.x[2];
    }
  }
  return best;
}

Hyperparams vgram_to_kernel(const VariogramModel& m) {
  if (!(m.partial_sill > 0.0)) throw std::invalid_argument("vgram_to_kernel: partial sill must be positive");
  if (!(m.range > 0.0)) throw std::invalid_argument("vgram_to_kernel: range must be positive");
  if (m.nugget_k < 0.0) throw std::invalid_argument("vgram_to_kernel: negative nugget");
  Hyperparams phi;
  phi.kernel = model_kernel(m);
  phi.tau2 = m.partial_sill;
  phi.g = m.nugget_k / m.partial_sill;
  return phi;
}

VariogramModel kernel_to_vgram(const Hyperparams& phi) {
  if (!phi.kernel.isotropic())
    throw std::invalid_argument("kernel_to_vgram: variogram models are isotropic; pre-scale anisotropic inputs instead");
  if (!(phi.tau2 > 0.0)) throw std::invalid_argument("kernel_to_vgram: tau2 must be positive");
  VariogramModel m;
  m.family = phi.kernel.family;
  m.p = phi.kernel.p;
  m.nu = phi.kernel.nu;
  const double theta = phi.kernel.theta[0];
  if (m.family == KernelFamily::PowerExp && m.p != 2.0)
    m.range = std::pow(theta, 1.0 / m.p);
  else
    m.range = std::sqrt(theta);
  m.partial_sill = phi.tau2;
  m.nugget_k = phi.tau2 * phi.g;
  return m;
}

OkPrediction ok_predict(const VariogramModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const Eigen::MatrixXd& Xstar, const OkOptions& opt) {
  const int n = static_cast<int>(X.rows());
  const int ns = static_cast<int>(Xstar.rows());
  if (X.cols() != Xstar.cols()) throw std::invalid_argument("ok_predict: dimension mismatch");
  if (n < 1) throw std::invalid_argument("ok_predict: empty training set");

  const Hyperparams phi = vgram_to_kernel(m);
  const double ymean = Y.mean();
  const Eigen::VectorXd yc = Y.array() - ymean;
  SpatialIndex idx(X);

  OkPrediction out;
  out.mean = Eigen::VectorXd::Constant(ns, std::numeric_limits<double>::quiet_NaN());
  out.var = Eigen::VectorXd::Constant(ns, std::numeric_limits<double>::quiet_NaN());
  out.error_code.assign(ns, 0);

  const int m_count = std::min(std::max(1, opt.m), n);
  const int floor_count = std::min(10, n);

#pragma omp parallel for schedule(static)
  for (int s = 0; s < ns; ++s) {
    const Eigen::VectorXd x = Xstar.row(s).transpose();
    std::vector<int> nb;
    if (opt.radius > 0.0) {
      nb = idx.within_radius(x, opt.radius);
      if (nb.empty()) {
        out.error_code[s] = 1;
        continue;
      }
      if (static_cast<int>(nb.size()) < floor_count) nb = idx.knn(x, floor_count);
    } else {
      nb = idx.knn(x, m_count);
    }

    const int k = static_cast<int>(nb.size());
    Eigen::MatrixXd Xnb(k, X.cols());
    Eigen::VectorXd ynb(k);
    for (int i = 0; i < k; ++i) {
      Xnb.row(i) = X.row(nb[i]);
      ynb[i] = yc[nb[i]];
    }

    try {
      GPFit local = gp_condition(phi, Xnb, ynb, false);
      PredictiveDistribution pd = gp_predict(local, x.transpose(), false, true);
      out.mean[s] = pd.mean[0] + ymean;
      out.var[s] = pd.var[0];
    } catch (const std::exception&) {
      out.error_code[s] = 2;
      continue;
    }

    if (opt.at_data == OkAtData::Exact) {
      // gamma(0) = 0 semantics: coincident sites reproduce the observation
      const int nearest = nb.front();
      if ((X.row(nearest).transpose() - x).squaredNorm() <= 1e-24) {
        out.mean[s] = Y[nearest];
        out.var[s] = 0.0;
      }
    }
  }
  return out;
}

}  // namespace minegp
