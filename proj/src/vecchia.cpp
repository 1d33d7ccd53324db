#include "minegp/vecchia.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "minegp/rng.hpp"
#include "minegp/spatial.hpp"

namespace minegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
constexpr double kMinJitterG = 1e-8;

double effective_g(double g) { return g < kMinJitterG ? g + kMinJitterG : g; }

// local correlation system of one conditioning set: B = K_cc + ge I and the
// cross vector k_ci; returns false when even a jittered factorization fails
struct LocalSystem {
  Eigen::MatrixXd B;
  Eigen::VectorXd k;
  Eigen::LLT<Eigen::MatrixXd> llt;
};

bool factor_local(LocalSystem& sys, double ge) {
  sys.B.diagonal().array() += ge;
  sys.llt.compute(sys.B);
  if (sys.llt.info() == Eigen::Success) return true;
  sys.B.diagonal().array() += 1e-6;  // jittered retry
  sys.llt.compute(sys.B);
  return sys.llt.info() == Eigen::Success;
}

// conditioning-point coordinates, one contiguous column per point, so the
// raw-pointer correlation kernels can stream them
Eigen::MatrixXd gather_points(const Eigen::MatrixXd& X, const std::vector<int>& order,
                              const std::vector<int>& ci) {
  Eigen::MatrixXd P(X.cols(), static_cast<Eigen::Index>(ci.size()));
  for (size_t a = 0; a < ci.size(); ++a) P.col(static_cast<Eigen::Index>(a)) = X.row(order[ci[a]]).transpose();
  return P;
}

}  // namespace

ConditioningSets build_conditioning_sets(const Eigen::MatrixXd& X, int m,
                                         VecchiaOrdering ordering, const std::vector<int>* given,
                                         std::uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 1) throw std::invalid_argument("build_conditioning_sets: empty input");
  if (m < 1) throw std::invalid_argument("build_conditioning_sets: m must be at least 1");

  ConditioningSets cs;
  cs.m = m;
  switch (ordering) {
    case VecchiaOrdering::Maximin:
      cs.order = maximin_order(X);
      break;
    case VecchiaOrdering::Random: {
      cs.order.resize(n);
      std::iota(cs.order.begin(), cs.order.end(), 0);
      RngStream rng = RngStream(seed).substream("vecchia.order");
      rng.shuffle(cs.order);
      break;
    }
    case VecchiaOrdering::Given: {
      if (given == nullptr || static_cast<int>(given->size()) != n)
        throw std::invalid_argument("build_conditioning_sets: given ordering missing or wrong size");
      std::vector<char> seen(n, 0);
      for (int r : *given) {
        if (r < 0 || r >= n || seen[r])
          throw std::invalid_argument("build_conditioning_sets: given ordering is not a permutation");
        seen[r] = 1;
      }
      cs.order = *given;
      break;
    }
  }

  cs.c.resize(n);
  IncrementalNN inn(d, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = X.row(cs.order[i]).transpose();
    if (i > 0) cs.c[i] = inn.knn(x, std::min(i, m));
    inn.add(x);
  }
  return cs;
}

UColumn u_column(const Hyperparams& phi, const Eigen::MatrixXd& X, const ConditioningSets& cs,
                 int i) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (i < 0 || i >= n || static_cast<int>(cs.order.size()) != n)
    throw std::invalid_argument("u_column: index or conditioning sets out of range");
  phi.kernel.validate(d);

  const double ge = effective_g(phi.g);
  const std::vector<int>& ci = cs.c[i];
  const int k = static_cast<int>(ci.size());
  const Eigen::VectorXd xi = X.row(cs.order[i]).transpose();

  UColumn out;
  out.i = i;
  out.rows = ci;

  if (k == 0) {
    out.sigma2 = phi.tau2 * (1.0 + ge);
    out.diag = 1.0 / std::sqrt(out.sigma2);
    return out;
  }

  const Eigen::MatrixXd P = gather_points(X, cs.order, ci);
  LocalSystem sys;
  sys.B.resize(k, k);
  sys.k.resize(k);
  for (int a = 0; a < k; ++a) {
    sys.k[a] = detail::corr(phi.kernel, P.col(a).data(), xi.data(), d);
    sys.B(a, a) = 1.0;
    for (int b = a + 1; b < k; ++b) {
      const double v = detail::corr(phi.kernel, P.col(a).data(), P.col(b).data(), d);
      sys.B(a, b) = v;
      sys.B(b, a) = v;
    }
  }
  if (!factor_local(sys, ge)) throw std::runtime_error("u_column: local covariance is singular");

  const Eigen::VectorXd b = sys.llt.solve(sys.k);
  const double s = (1.0 + ge) - sys.k.dot(b);
  if (!(s > 0.0)) throw std::runtime_error("u_column: nonpositive conditional variance");

  out.sigma2 = phi.tau2 * s;
  out.diag = 1.0 / std::sqrt(out.sigma2);
  out.vals.resize(k);
  for (int a = 0; a < k; ++a) out.vals[a] = -b[a] * out.diag;
  return out;
}

std::int64_t SparseUFactor::nnz() const {
  std::int64_t t = n;
  for (const auto& r : rows) t += static_cast<std::int64_t>(r.size());
  return t;
}

SparseUFactor build_u(const Hyperparams& phi, const Eigen::MatrixXd& X,
                      const ConditioningSets& cs) {
  const int n = static_cast<int>(X.rows());
  SparseUFactor u;
  u.n = n;
  u.diag.resize(n);
  u.sigma2.resize(n);
  u.rows.resize(n);
  u.vals.resize(n);
  bool failed = false;
#pragma omp parallel for schedule(dynamic, 64)
  for (int i = 0; i < n; ++i) {
    try {
      UColumn col = u_column(phi, X, cs, i);
      u.diag[i] = col.diag;
      u.sigma2[i] = col.sigma2;
      u.rows[i] = std::move(col.rows);
      u.vals[i] = std::move(col.vals);
    } catch (...) {
#pragma omp atomic write
      failed = true;
    }
  }
  if (failed) throw std::runtime_error("build_u: singular local covariance");
  return u;
}

std::string u_factor_coordinate_list(const SparseUFactor& u) {
  std::string out;
  char buf[80];
  for (int i = 0; i < u.n; ++i) {
    std::snprintf(buf, sizeof buf, "%d %d %.17g\n", i, i, u.diag[i]);
    out += buf;
    for (size_t a = 0; a < u.rows[i].size(); ++a) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", u.rows[i][a], i, u.vals[i][a]);
      out += buf;
    }
  }
  return out;
}

double vecchia_loglik(const Hyperparams& phi, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                      const ConditioningSets& cs) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (Y.size() != n || static_cast<int>(cs.order.size()) != n)
    throw std::invalid_argument("vecchia_loglik: size mismatch");
  phi.kernel.validate(d);
  const double ge = effective_g(phi.g);

  Eigen::VectorXd contrib(n);
  bool failed = false;
#pragma omp parallel for schedule(dynamic, 64)
  for (int i = 0; i < n; ++i) {
    const std::vector<int>& ci = cs.c[i];
    const int k = static_cast<int>(ci.size());
    const double yi = Y[cs.order[i]];
    double s, r;
    if (k == 0) {
      s = 1.0 + ge;
      r = yi;
    } else {
      const Eigen::VectorXd xi = X.row(cs.order[i]).transpose();
      const Eigen::MatrixXd P = gather_points(X, cs.order, ci);
      LocalSystem sys;
      sys.B.resize(k, k);
      sys.k.resize(k);
      Eigen::VectorXd yc(k);
      for (int a = 0; a < k; ++a) {
        sys.k[a] = detail::corr(phi.kernel, P.col(a).data(), xi.data(), d);
        yc[a] = Y[cs.order[ci[a]]];
        sys.B(a, a) = 1.0;
        for (int b = a + 1; b < k; ++b) {
          const double v = detail::corr(phi.kernel, P.col(a).data(), P.col(b).data(), d);
          sys.B(a, b) = v;
          sys.B(b, a) = v;
        }
      }
      if (!factor_local(sys, ge)) {
#pragma omp atomic write
        failed = true;
        contrib[i] = 0.0;
        continue;
      }
      const Eigen::VectorXd b = sys.llt.solve(sys.k);
      s = (1.0 + ge) - sys.k.dot(b);
      r = yi - b.dot(yc);
      if (!(s > 0.0)) {
#pragma omp atomic write
        failed = true;
        contrib[i] = 0.0;
        continue;
      }
    }
    const double sig2 = phi.tau2 * s;
    contrib[i] = -0.5 * (kLog2Pi + std::log(sig2) + r * r / sig2);
  }
  if (failed) throw std::runtime_error("vecchia_loglik: singular local covariance");
  return contrib.sum();
}

double vecchia_profile_loglik(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& Y, const ConditioningSets& cs,
                              Eigen::VectorXd* grad, double* tau2_hat_out) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (Y.size() != n || static_cast<int>(cs.order.size()) != n)
    throw std::invalid_argument("vecchia_profile_loglik: size mismatch");
  kernel.validate(d);
  const double ge = effective_g(g);
  const int nt = static_cast<int>(kernel.n_theta());
  const int np = 1 + nt;  // g first, then theta
  const bool want_grad = grad != nullptr;

  // per-column contributions, reduced sequentially for determinism
  Eigen::VectorXd logs(n), qs(n);
  Eigen::MatrixXd dlogs, dqs;
  if (want_grad) {
    dlogs.setZero(np, n);
    dqs.setZero(np, n);
  }

  bool failed = false;
#pragma omp parallel for schedule(dynamic, 64)
  for (int i = 0; i < n; ++i) {
    const std::vector<int>& ci = cs.c[i];
    const int k = static_cast<int>(ci.size());
    const double yi = Y[cs.order[i]];

    if (k == 0) {
      const double s = 1.0 + ge;
      logs[i] = std::log(s);
      qs[i] = yi * yi / s;
      if (want_grad) {
        // ds/dg = 1, dr/dg = 0
        dlogs(0, i) = 1.0 / s;
        dqs(0, i) = -(yi / s) * (yi / s);
      }
      continue;
    }

    const Eigen::VectorXd xi = X.row(cs.order[i]).transpose();
    const Eigen::MatrixXd P = gather_points(X, cs.order, ci);
    LocalSystem sys;
    sys.B.resize(k, k);
    sys.k.resize(k);
    Eigen::VectorXd yc(k);
    std::vector<Eigen::MatrixXd> dB;
    std::vector<Eigen::VectorXd> dk;
    if (want_grad) {
      dB.assign(nt, Eigen::MatrixXd(k, k));
      dk.assign(nt, Eigen::VectorXd(k));
    }
    std::vector<double> dtheta(nt);

    for (int a = 0; a < k; ++a) {
      yc[a] = Y[cs.order[ci[a]]];
      if (want_grad) {
        sys.k[a] = detail::corr_grad(kernel, P.col(a).data(), xi.data(), d, dtheta.data());
        for (int t = 0; t < nt; ++t) dk[t][a] = dtheta[t];
      } else {
        sys.k[a] = detail::corr(kernel, P.col(a).data(), xi.data(), d);
      }
      sys.B(a, a) = 1.0;
      if (want_grad)
        for (int t = 0; t < nt; ++t) dB[t](a, a) = 0.0;
      for (int b = a + 1; b < k; ++b) {
        double v;
        if (want_grad) {
          v = detail::corr_grad(kernel, P.col(a).data(), P.col(b).data(), d, dtheta.data());
          for (int t = 0; t < nt; ++t) {
            dB[t](a, b) = dtheta[t];
            dB[t](b, a) = dtheta[t];
          }
        } else {
          v = detail::corr(kernel, P.col(a).data(), P.col(b).data(), d);
        }
        sys.B(a, b) = v;
        sys.B(b, a) = v;
      }
    }

    if (!factor_local(sys, ge)) {
#pragma omp atomic write
      failed = true;
      logs[i] = 0.0;
      qs[i] = 0.0;
      continue;
    }
    const Eigen::VectorXd b = sys.llt.solve(sys.k);
    const double s = (1.0 + ge) - sys.k.dot(b);
    const double r = yi - b.dot(yc);
    if (!(s > 0.0)) {
#pragma omp atomic write
      failed = true;
      logs[i] = 0.0;
      qs[i] = 0.0;
      continue;
    }
    logs[i] = std::log(s);
    qs[i] = r * r / s;

    if (want_grad) {
      const Eigen::VectorXd u = sys.llt.solve(yc);
      // nugget: ds = 1 + b'b, dr = b'u
      {
        const double ds = 1.0 + b.squaredNorm();
        const double dr = b.dot(u);
        dlogs(0, i) = ds / s;
        dqs(0, i) = 2.0 * r * dr / s - (r / s) * (r / s) * ds;
      }
      for (int t = 0; t < nt; ++t) {
        const Eigen::VectorXd dBb = dB[t] * b;
        const double ds = -(2.0 * dk[t].dot(b) - b.dot(dBb));
        const double dr = -(dk[t] - dBb).dot(u);
        dlogs(1 + t, i) = ds / s;
        dqs(1 + t, i) = 2.0 * r * dr / s - (r / s) * (r / s) * ds;
      }
    }
  }

  if (failed) {
    if (grad != nullptr) grad->setZero(np);
    return -std::numeric_limits<double>::infinity();
  }

  const double Q = qs.sum();
  const double N = static_cast<double>(n);
  if (!(Q / N > 1e-12)) throw DegenerateScaleError("vecchia_profile_loglik: degenerate scale");
  if (tau2_hat_out != nullptr) *tau2_hat_out = Q / N;

  const double ll = -0.5 * N * (kLog2Pi + std::log(Q / N) + 1.0) - 0.5 * logs.sum();
  if (want_grad) {
    grad->resize(np);
    for (int p = 0; p < np; ++p)
      (*grad)[p] = -0.5 * N * dqs.row(p).sum() / Q - 0.5 * dlogs.row(p).sum();
  }
  return ll;
}

SVecchiaFit fit_svecchia(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                         const SVecchiaOptions& so) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (Y.size() != n) throw std::invalid_argument("fit_svecchia: size mismatch");
  if (n < 2) throw std::invalid_argument("fit_svecchia: need at least two points");

  SVecchiaFit fit;
  fit.ymean = so.center ? Y.mean() : 0.0;
  fit.y = Y.array() - fit.ymean;
  fit.scale = Eigen::VectorXd::Ones(d);

  Eigen::MatrixXd Xcur = X;
  Kernel kern = so.kernel;
  const Eigen::VectorXd th0 = default_theta_init(X, false);
  kern.theta.resize(d);
  for (int k = 0; k < d; ++k) kern.theta[k] = std::clamp(th0[k], so.theta_lo, so.theta_hi);
  double g_cur = std::clamp(so.g_init, so.g_lo, so.g_hi);

  ConditioningSets cs;
  double tau2 = 1.0, ll = 0.0;
  bool inner_converged = false;

  for (int round = 1; round <= so.max_rounds; ++round) {
    cs = build_conditioning_sets(Xcur, so.m, so.ordering, nullptr, so.seed);

    ObjFn obj = [&](const Eigen::VectorXd& z, Eigen::VectorXd* gr) -> double {
      const double g = std::exp(z[0]);
      Kernel k = kern;
      for (int t = 0; t < d; ++t) k.theta[t] = std::exp(z[1 + t]);
      Eigen::VectorXd raw;
      double val;
      try {
        val = vecchia_profile_loglik(g, k, Xcur, fit.y, cs, gr != nullptr ? &raw : nullptr);
      } catch (const DegenerateScaleError&) {
        if (gr != nullptr) gr->setZero(z.size());
        return std::numeric_limits<double>::infinity();
      }
      if (!std::isfinite(val)) {
        if (gr != nullptr) gr->setZero(z.size());
        return std::numeric_limits<double>::infinity();
      }
      if (gr != nullptr) {
        gr->resize(z.size());
        (*gr)[0] = -raw[0] * g;  // chain rule through the log, negated
        for (int t = 0; t < d; ++t) (*gr)[1 + t] = -raw[1 + t] * k.theta[t];
      }
      return -val;
    };

    Eigen::VectorXd z0(1 + d), lo(1 + d), hi(1 + d);
    z0[0] = std::log(g_cur);
    lo[0] = std::log(so.g_lo);
    hi[0] = std::log(so.g_hi);
    for (int t = 0; t < d; ++t) {
      z0[1 + t] = std::log(kern.theta[t]);
      lo[1 + t] = std::log(so.theta_lo);
      hi[1 + t] = std::log(so.theta_hi);
    }
    BoxResult br = minimize_box(obj, z0, lo, hi, so.opt);

    g_cur = std::exp(br.x[0]);
    for (int t = 0; t < d; ++t) kern.theta[t] = std::exp(br.x[1 + t]);
    ll = vecchia_profile_loglik(g_cur, kern, Xcur, fit.y, cs, nullptr, &tau2);
    inner_converged = br.converged;
    fit.rounds = round;

    if (round >= 2 && (kern.theta.array() - 1.0).abs().maxCoeff() < 0.05) {
      fit.scale_converged = true;
      break;
    }
    if (round == so.max_rounds) break;

    fit.scale.array() *= kern.theta.array();
    Xcur = prescale_inputs(Xcur, kern.theta);
    kern.theta.setOnes();  // rescaled metric makes unit lengthscales the restart
  }

  fit.phi.tau2 = tau2;
  fit.phi.g = g_cur;
  fit.phi.kernel = kern;
  fit.phi_orig = fit.phi;
  fit.phi_orig.kernel.theta = fit.scale.cwiseProduct(kern.theta);
  fit.Xs = std::move(Xcur);
  fit.cs = std::move(cs);
  fit.U = build_u(fit.phi, fit.Xs, fit.cs);
  fit.loglik = ll;
  fit.converged = inner_converged;
  return fit;
}

VecchiaPredictor make_vecchia_predictor(const Hyperparams& phi, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& Y, const Eigen::MatrixXd& Xstar,
                                        int m, bool training_only, bool center) {
  const int n = static_cast<int>(X.rows());
  const int ns = static_cast<int>(Xstar.rows());
  const int d = static_cast<int>(X.cols());
  if (ns < 1) throw std::invalid_argument("make_vecchia_predictor: no prediction sites");
  if (Xstar.cols() != d) throw std::invalid_argument("make_vecchia_predictor: dimension mismatch");
  if (Y.size() != n) throw std::invalid_argument("make_vecchia_predictor: size mismatch");
  phi.kernel.validate(d);

  VecchiaPredictor pr;
  pr.ymean = center ? Y.mean() : 0.0;
  const Eigen::VectorXd yc = Y.array() - pr.ymean;
  const double ge = effective_g(phi.g);

  pr.order = maximin_order(Xstar);
  pr.sigma.resize(ns);
  pr.mu_train.resize(ns);
  pr.ctest.resize(ns);
  pr.btest.resize(ns);

  SpatialIndex idx(X);
  IncrementalNN inn(d, ns);

  struct Cand {
    double d2;
    bool is_test;
    int id;  // training row, or test position
  };

  for (int kpos = 0; kpos < ns; ++kpos) {
    const Eigen::VectorXd x = Xstar.row(pr.order[kpos]).transpose();

    std::vector<Cand> cand;
    const int mtr = std::min(m, n);
    for (int j : idx.knn(x, mtr))
      cand.push_back({(X.row(j).transpose() - x).squaredNorm(), false, j});
    if (!training_only && kpos > 0) {
      for (int t : inn.knn(x, std::min(kpos, m)))
        cand.push_back({(Xstar.row(pr.order[t]).transpose() - x).squaredNorm(), true, t});
    }
    std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) {
      if (a.d2 != b.d2) return a.d2 < b.d2;
      if (a.is_test != b.is_test) return !a.is_test;  // training wins ties
      return a.id < b.id;
    });
    const int k = std::min<int>(m, static_cast<int>(cand.size()));

    // local correlation system over the chosen conditioning points
    Eigen::MatrixXd P(d, k);
    for (int a = 0; a < k; ++a)
      P.col(a) = (cand[a].is_test ? Xstar.row(pr.order[cand[a].id]) : X.row(cand[a].id)).transpose();
    LocalSystem sys;
    sys.B.resize(k, k);
    sys.k.resize(k);
    for (int a = 0; a < k; ++a) {
      sys.k[a] = detail::corr(phi.kernel, P.col(a).data(), x.data(), d);
      sys.B(a, a) = 1.0;
      for (int b = a + 1; b < k; ++b) {
        const double v = detail::corr(phi.kernel, P.col(a).data(), P.col(b).data(), d);
        sys.B(a, b) = v;
        sys.B(b, a) = v;
      }
    }
    if (!factor_local(sys, ge))
      throw std::runtime_error("make_vecchia_predictor: singular conditioning system");
    const Eigen::VectorXd b = sys.llt.solve(sys.k);
    const double s = (1.0 + ge) - sys.k.dot(b);
    if (!(s > 0.0)) throw std::runtime_error("make_vecchia_predictor: nonpositive variance");

    pr.sigma[kpos] = std::sqrt(phi.tau2 * s);
    double mu = 0.0;
    for (int a = 0; a < k; ++a) {
      if (cand[a].is_test) {
        pr.ctest[kpos].push_back(cand[a].id);
        pr.btest[kpos].push_back(b[a]);
      } else {
        mu += b[a] * yc[cand[a].id];
      }
    }
    pr.mu_train[kpos] = mu;
    inn.add(x);
  }

  // kriging recursion through the ordered sites: each mean feeds the later
  // sites that condition on it
  Eigen::VectorXd mu_ord(ns);
  for (int i = 0; i < ns; ++i) {
    double v = pr.mu_train[i];
    for (size_t a = 0; a < pr.ctest[i].size(); ++a) v += pr.btest[i][a] * mu_ord[pr.ctest[i][a]];
    mu_ord[i] = v;
  }

  pr.mean.resize(ns);
  pr.var.resize(ns);
  for (int i = 0; i < ns; ++i) pr.mean[pr.order[i]] = mu_ord[i] + pr.ymean;

  if (training_only) {
    for (int i = 0; i < ns; ++i) pr.var[pr.order[i]] = pr.sigma[i] * pr.sigma[i];
    return pr;
  }

  // pointwise variances: columns of V^{-1} by sparse back-substitution over
  // the ancestor closure of each site (V upper triangular in test positions)
  std::vector<double> acc(ns, 0.0);
  std::vector<char> seen(ns, 0);
  std::vector<int> closure, stack;
  for (int i = 0; i < ns; ++i) {
    closure.clear();
    stack.assign(1, i);
    seen[i] = 1;
    while (!stack.empty()) {
      const int l = stack.back();
      stack.pop_back();
      closure.push_back(l);
      for (int kc : pr.ctest[l])
        if (!seen[kc]) {
          seen[kc] = 1;
          stack.push_back(kc);
        }
    }
    std::sort(closure.begin(), closure.end(), std::greater<int>());
    acc[i] = 1.0;
    double nrm2 = 0.0;
    for (int l : closure) {
      const double w = pr.sigma[l] * acc[l];
      nrm2 += w * w;
      for (size_t a = 0; a < pr.ctest[l].size(); ++a)
        acc[pr.ctest[l][a]] += pr.btest[l][a] / pr.sigma[l] * w;
      acc[l] = 0.0;  // reset while unwinding
      seen[l] = 0;
    }
    pr.var[pr.order[i]] = nrm2;
  }
  return pr;
}

Eigen::VectorXd VecchiaPredictor::draw(RngStream& rng) const {
  const int ns = static_cast<int>(order.size());
  Eigen::VectorXd w(ns), out(ns);
  for (int i = 0; i < ns; ++i) {
    double v = mu_train[i] + sigma[i] * rng.normal();
    for (size_t a = 0; a < ctest[i].size(); ++a) v += btest[i][a] * w[ctest[i][a]];
    w[i] = v;
  }
  for (int i = 0; i < ns; ++i) out[order[i]] = w[i] + ymean;
  return out;
}

PredictiveDistribution vecchia_predict(const Hyperparams& phi, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& Y, const Eigen::MatrixXd& Xstar,
                                       int m, bool full_cov, bool training_only) {
  VecchiaPredictor pr = make_vecchia_predictor(phi, X, Y, Xstar, m, training_only);
  PredictiveDistribution out;
  out.mean = pr.mean;
  out.var = pr.var;
  if (!full_cov) return out;

  const int ns = static_cast<int>(Xstar.rows());
  // dense M = V^{-1} column by column, then Sigma* = M' M, unpermuted
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ns, ns);
  for (int i = 0; i < ns; ++i) {
    M(i, i) = pr.sigma[i];
    for (int l = i; l >= 0; --l) {
      if (M(l, i) == 0.0) continue;
      const double w = l == i ? M(i, i) : pr.sigma[l] * M(l, i);
      M(l, i) = w;
      for (size_t a = 0; a < pr.ctest[l].size(); ++a)
        M(pr.ctest[l][a], i) += pr.btest[l][a] / pr.sigma[l] * w;
    }
  }
  Eigen::MatrixXd C_ord = M.transpose() * M;
  Eigen::MatrixXd C(ns, ns);
  for (int a = 0; a < ns; ++a)
    for (int b = 0; b < ns; ++b) C(pr.order[a], pr.order[b]) = C_ord(a, b);
  out.cov = std::move(C);
  out.var = out.cov->diagonal();
  return out;
}

PredictiveDistribution svecchia_predict(const SVecchiaFit& fit, const Eigen::MatrixXd& Xstar,
                                        bool full_cov, bool training_only) {
  const Eigen::MatrixXd Xss = prescale_inputs(Xstar, fit.scale);
  const Eigen::VectorXd yraw = fit.y.array() + fit.ymean;
  return vecchia_predict(fit.phi, fit.Xs, yraw, Xss, fit.cs.m, full_cov, training_only);
}

VecchiaPredictor make_svecchia_predictor(const SVecchiaFit& fit, const Eigen::MatrixXd& Xstar,
                                         bool training_only) {
  const Eigen::MatrixXd Xss = prescale_inputs(Xstar, fit.scale);
  VecchiaPredictor pr =
      make_vecchia_predictor(fit.phi, fit.Xs, fit.y, Xss, fit.cs.m, training_only, false);
  pr.ymean = fit.ymean;
  for (int i = 0; i < pr.mean.size(); ++i) pr.mean[i] += fit.ymean;
  return pr;
}

}  // namespace minegp
