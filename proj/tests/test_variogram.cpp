#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "minegp/gp.hpp"
#include "minegp/kernel.hpp"
#include "minegp/rng.hpp"
#include "minegp/variogram.hpp"

using namespace minegp;

namespace {

// all-pairs reference binning against a given edge vector (right-closed bins,
// first bin includes h = 0)
EmpiricalVariogram brute_variogram(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                   const Eigen::VectorXd& edges) {
  const int n = static_cast<int>(X.rows());
  const int K = static_cast<int>(edges.size()) - 1;
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(K);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double h = (X.row(i) - X.row(j)).norm();
      if (h > edges[K]) continue;
      int b = 0;
      while (b < K && h > edges[b + 1]) ++b;
      const double dy = Y[i] - Y[j];
      sums[b] += dy * dy;
      counts[b] += 1;
    }
  }
  EmpiricalVariogram ev;
  ev.bin_edges = edges;
  ev.gamma_hat.resize(K);
  ev.pair_counts = counts;
  for (int b = 0; b < K; ++b)
    ev.gamma_hat[b] = counts[b] > 0 ? sums[b] / (2.0 * counts[b])
                                    : std::numeric_limits<double>::quiet_NaN();
  return ev;
}

void check_same_bins(const EmpiricalVariogram& a, const EmpiricalVariogram& b) {
  REQUIRE(a.gamma_hat.size() == b.gamma_hat.size());
  for (int k = 0; k < a.gamma_hat.size(); ++k) {
    CHECK(a.pair_counts[k] == b.pair_counts[k]);
    if (std::isnan(a.gamma_hat[k]))
      CHECK(std::isnan(b.gamma_hat[k]));
    else
      CHECK(a.gamma_hat[k] == doctest::Approx(b.gamma_hat[k]).epsilon(1e-12));
  }
}

}  // namespace

TEST_SUITE("variogram") {

TEST_CASE("two points one bin") {
  Eigen::MatrixXd X(2, 1);
  X << 0.1, 0.4;
  Eigen::VectorXd Y(2);
  Y << 1.0, 3.0;
  EmpiricalVariogram ev = empirical_semivariogram(X, Y, 0.5, 0.5);
  REQUIRE(ev.gamma_hat.size() == 1);
  CHECK(ev.bin_edges[0] == 0.0);
  CHECK(ev.bin_edges[1] == 0.5);
  CHECK(ev.bin_centers[0] == doctest::Approx(0.25));
  CHECK(ev.pair_counts[0] == 1);
  CHECK(ev.gamma_hat[0] == doctest::Approx(2.0).epsilon(1e-14));  // 4 / (2*1)

  CHECK_THROWS(empirical_semivariogram(X.topRows(1), Y.head(1), 0.5, 0.5));
  CHECK_THROWS(empirical_semivariogram(X, Y, 0.0, 0.5));
  CHECK_THROWS(empirical_semivariogram(X, Y, 0.5, 0.4));
}

TEST_CASE("matches brute-force all-pairs binning") {
  RngStream rng(401);
  const int n = 60;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    Y[i] = rng.normal();
  }
  // a couple of exact duplicates so the h = 0 pair lands in the first bin
  X.row(7) = X.row(3);
  X.row(19) = X.row(3);

  EmpiricalVariogram ev = empirical_semivariogram(X, Y, 0.07, 0.35);

  // edge layout: starts at 0, strictly increasing, steps at most bin_width,
  // last edge exactly h_max
  CHECK(ev.bin_edges[0] == 0.0);
  for (int k = 0; k + 1 < ev.bin_edges.size(); ++k) {
    CHECK(ev.bin_edges[k] < ev.bin_edges[k + 1]);
    CHECK(ev.bin_edges[k + 1] - ev.bin_edges[k] <= 0.07 + 1e-12);
  }
  CHECK(ev.bin_edges[ev.bin_edges.size() - 1] == 0.35);
  for (int k = 0; k < ev.bin_centers.size(); ++k)
    CHECK(ev.bin_centers[k] ==
          doctest::Approx(0.5 * (ev.bin_edges[k] + ev.bin_edges[k + 1])).epsilon(1e-15));

  check_same_bins(ev, brute_variogram(X, Y, ev.bin_edges));

  // nonnegative estimates, and counts add up to every pair within h_max
  int total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((X.row(i) - X.row(j)).norm() <= 0.35) ++total;
  CHECK(ev.pair_counts.sum() == total);
  for (int k = 0; k < ev.gamma_hat.size(); ++k)
    if (!std::isnan(ev.gamma_hat[k])) CHECK(ev.gamma_hat[k] >= 0.0);
}

TEST_CASE("invariant to permuting the data") {
  RngStream rng(402);
  const int n = 45;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) X(i, d) = rng.uniform();
    Y[i] = 2.0 * rng.normal();
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Eigen::MatrixXd Xp(n, 3);
  Eigen::VectorXd Yp(n);
  for (int i = 0; i < n; ++i) {
    Xp.row(i) = X.row(perm[i]);
    Yp[i] = Y[perm[i]];
  }
  EmpiricalVariogram a = empirical_semivariogram(X, Y, 0.1, 0.6);
  EmpiricalVariogram b = empirical_semivariogram(Xp, Yp, 0.1, 0.6);
  check_same_bins(a, b);
}

TEST_CASE("model endpoints and monotonicity across families") {
  std::vector<VariogramModel> models;
  for (double p : {1.0, 1.5, 2.0}) {
    VariogramModel m;
    m.family = KernelFamily::PowerExp;
    m.p = p;
    m.nugget_k = 0.1;
    m.partial_sill = 0.7;
    m.range = 0.3;
    models.push_back(m);
  }
  for (double nu : {1.5, 2.5}) {
    VariogramModel m;
    m.family = KernelFamily::Matern;
    m.nu = nu;
    m.nugget_k = 0.05;
    m.partial_sill = 1.3;
    m.range = 0.4;
    models.push_back(m);
  }
  for (const VariogramModel& m : models) {
    CHECK(model_semivariogram(m, 0.0) == 0.0);
    CHECK(model_semivariogram(m, 1e9) ==
          doctest::Approx(m.nugget_k + m.partial_sill).epsilon(1e-12));
    // nugget discontinuity just above zero
    CHECK(model_semivariogram(m, 1e-12) == doctest::Approx(m.nugget_k).epsilon(1e-6));
    double prev = 0.0;
    for (int k = 1; k <= 400; ++k) {
      const double g = model_semivariogram(m, k * (2.0 / 400.0));
      CHECK(g >= prev - 1e-12);
      CHECK(g >= 0.0);
      prev = g;
    }
    CHECK_THROWS(model_semivariogram(m, -0.1));
  }
}

TEST_CASE("kernel duality: tau2(1+g) - cov equals the semivariogram") {
  auto check_duality = [](const VariogramModel& m, const Eigen::MatrixXd& X) {
    const int n = static_cast<int>(X.rows());
    Hyperparams phi = vgram_to_kernel(m);
    CovMatrix S = cov_assemble(phi, X);
    REQUIRE(S.includes_nugget);
    const double ceiling = phi.tau2 * (1.0 + phi.g);
    for (int i = 0; i < n; ++i) {
      CHECK(S.sigma(i, i) == doctest::Approx(ceiling).epsilon(1e-14));
      for (int j = i + 1; j < n; ++j) {
        const double h = (X.row(i) - X.row(j)).norm();
        CHECK(ceiling - S.sigma(i, j) ==
              doctest::Approx(model_semivariogram(m, h)).epsilon(1e-12));
      }
    }
  };

  RngStream rng(403);
  Eigen::MatrixXd X2(25, 2);
  for (int i = 0; i < 25; ++i)
    for (int d = 0; d < 2; ++d) X2(i, d) = rng.uniform();
  Eigen::MatrixXd X1(25, 1);
  for (int i = 0; i < 25; ++i) X1(i, 0) = rng.uniform();

  VariogramModel m;
  m.nugget_k = 0.12;
  m.partial_sill = 0.53;
  m.range = 0.15;

  // radial correlations hold in any dimension
  m.family = KernelFamily::Matern;
  m.nu = 2.5;
  check_duality(m, X2);
  m.nu = 1.5;
  check_duality(m, X2);
  m.family = KernelFamily::PowerExp;
  m.p = 2.0;
  check_duality(m, X2);

  // power-exponential correlation with p != 2 sums |gap_k|^p per coordinate,
  // so it agrees with a function of Euclidean distance only on the line
  m.p = 1.5;
  check_duality(m, X1);
  m.p = 1.0;
  check_duality(m, X1);
}

TEST_CASE("parameter translation both directions") {
  VariogramModel m;
  m.family = KernelFamily::Matern;
  m.nu = 2.5;
  m.range = 0.15;
  m.partial_sill = 0.53;
  m.nugget_k = 0.12;

  Hyperparams phi = vgram_to_kernel(m);
  CHECK(phi.kernel.theta.size() == 1);
  CHECK(phi.kernel.theta[0] == doctest::Approx(0.0225).epsilon(1e-12));
  CHECK(phi.tau2 == 0.53);
  CHECK(phi.g == doctest::Approx(0.12 / 0.53).epsilon(1e-15));
  CHECK(phi.g == doctest::Approx(0.2264).epsilon(1e-3));

  VariogramModel back = kernel_to_vgram(phi);
  CHECK(back.family == m.family);
  CHECK(back.nu == m.nu);
  CHECK(back.range == doctest::Approx(m.range).epsilon(1e-14));
  CHECK(back.partial_sill == doctest::Approx(m.partial_sill).epsilon(1e-14));
  CHECK(back.nugget_k == doctest::Approx(m.nugget_k).epsilon(1e-14));

  SUBCASE("powerexp exponent routes through R^p") {
    VariogramModel pe = m;
    pe.family = KernelFamily::PowerExp;
    pe.p = 1.5;
    Hyperparams phe = vgram_to_kernel(pe);
    CHECK(phe.kernel.theta[0] == doctest::Approx(std::pow(0.15, 1.5)).epsilon(1e-14));
    VariogramModel rt = kernel_to_vgram(phe);
    CHECK(rt.range == doctest::Approx(0.15).epsilon(1e-13));
  }
  SUBCASE("zero nugget maps to zero noise") {
    VariogramModel z = m;
    z.nugget_k = 0.0;
    CHECK(vgram_to_kernel(z).g == 0.0);
  }
  SUBCASE("degenerate models are rejected") {
    VariogramModel bad = m;
    bad.partial_sill = 0.0;
    CHECK_THROWS(vgram_to_kernel(bad));
    bad = m;
    bad.range = 0.0;
    CHECK_THROWS(vgram_to_kernel(bad));
    bad = m;
    bad.nugget_k = -0.1;
    CHECK_THROWS(vgram_to_kernel(bad));
  }
  SUBCASE("anisotropic kernels have no scalar range") {
    Hyperparams aniso;
    aniso.tau2 = 1.0;
    aniso.g = 0.1;
    aniso.kernel = gaussian_kernel(Eigen::VectorXd::Constant(2, 0.3));
    CHECK_THROWS(kernel_to_vgram(aniso));
  }
}

TEST_CASE("nls recovers an exactly generated model") {
  VariogramModel truth;
  truth.family = KernelFamily::Matern;
  truth.nu = 2.5;
  truth.nugget_k = 0.05;
  truth.partial_sill = 1.2;
  truth.range = 0.3;

  const int K = 20;
  EmpiricalVariogram ev;
  ev.bin_edges.resize(K + 1);
  ev.bin_centers.resize(K);
  ev.gamma_hat.resize(K);
  ev.pair_counts.resize(K);
  for (int b = 0; b <= K; ++b) ev.bin_edges[b] = 0.05 * b;
  for (int b = 0; b < K; ++b) {
    ev.bin_centers[b] = 0.05 * b + 0.025;
    ev.gamma_hat[b] = model_semivariogram(truth, ev.bin_centers[b]);
    ev.pair_counts[b] = 40 + 3 * b;  // uneven weights must not matter at the optimum
  }

  VariogramModel proto;
  proto.family = truth.family;
  proto.nu = truth.nu;

  for (NlsWeights w : {NlsWeights::Equal, NlsWeights::PairCount}) {
    NlsOptions opt;
    opt.weights = w;
    NlsFit fit = fit_nls(ev, proto, opt);
    CHECK(fit.sse <= 1e-8);
    CHECK(fit.model.nugget_k == doctest::Approx(truth.nugget_k).epsilon(0.01));
    CHECK(fit.model.partial_sill == doctest::Approx(truth.partial_sill).epsilon(0.01));
    CHECK(fit.model.range == doctest::Approx(truth.range).epsilon(0.01));
  }

  SUBCASE("gaussian family recovery") {
    VariogramModel gt = truth;
    gt.family = KernelFamily::PowerExp;
    gt.p = 2.0;
    for (int b = 0; b < K; ++b) ev.gamma_hat[b] = model_semivariogram(gt, ev.bin_centers[b]);
    VariogramModel gproto;
    gproto.family = KernelFamily::PowerExp;
    gproto.p = 2.0;
    NlsFit fit = fit_nls(ev, gproto, {});
    CHECK(fit.model.nugget_k == doctest::Approx(gt.nugget_k).epsilon(0.01));
    CHECK(fit.model.partial_sill == doctest::Approx(gt.partial_sill).epsilon(0.01));
    CHECK(fit.model.range == doctest::Approx(gt.range).epsilon(0.01));
  }
  SUBCASE("too few usable bins") {
    EmpiricalVariogram tiny = ev;
    for (int b = 2; b < K; ++b) tiny.pair_counts[b] = 0;
    CHECK_THROWS(fit_nls(tiny, proto, {}));
  }
}

TEST_CASE("sine toy fit pins the nugget at its floor") {
  // n=20 noisy sine wave; least squares on the raw semivariogram drives the
  // nugget to the 1e-4 search floor while sill/range stay in a sane band
  RngStream rng(404);
  const int n = 20;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    Y[i] = 2.0 + 2.0 * std::sin(4.0 * M_PI * X(i, 0)) + std::sqrt(0.1) * rng.normal();
  }
  EmpiricalVariogram ev = empirical_semivariogram(X, Y, 0.05, 0.5);

  VariogramModel proto;
  proto.family = KernelFamily::PowerExp;
  proto.p = 2.0;
  NlsFit fit = fit_nls(ev, proto, {});
  CHECK(fit.model.nugget_k == doctest::Approx(1e-4).epsilon(1e-6));
  CHECK(fit.model.partial_sill > 0.8);
  CHECK(fit.model.partial_sill < 6.0);
  CHECK(fit.model.range > 0.04);
  CHECK(fit.model.range < 0.35);

  // restricting the fitted lag span is the scripted stand-in for hand fitting
  NlsOptions eb;
  eb.h_max_fit = 0.25;
  NlsFit fit_eb = fit_nls(ev, proto, eb);
  CHECK(std::isfinite(fit_eb.sse));
  CHECK(fit_eb.model.partial_sill > 0.0);
}

TEST_CASE("kriging at training sites: exact vs smoothed") {
  RngStream rng(405);
  const int n = 30;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    Y[i] = rng.normal();
  }
  VariogramModel m;
  m.family = KernelFamily::PowerExp;
  m.p = 2.0;
  m.nugget_k = 0.1;
  m.partial_sill = 1.0;
  m.range = 0.2;

  Eigen::MatrixXd Xstar(4, 2);
  Xstar.row(0) = X.row(5);
  Xstar.row(1) = X.row(17);
  Xstar.row(2) = X.row(29);
  Xstar.row(3) << 0.31, 0.62;

  OkOptions exact;
  exact.at_data = OkAtData::Exact;
  OkPrediction pe = ok_predict(m, X, Y, Xstar, exact);
  CHECK(pe.error_code[0] == 0);
  CHECK(pe.mean[0] == doctest::Approx(Y[5]).epsilon(1e-14));
  CHECK(pe.var[0] == 0.0);
  CHECK(pe.mean[1] == doctest::Approx(Y[17]).epsilon(1e-14));
  CHECK(pe.var[1] == 0.0);
  CHECK(pe.mean[2] == doctest::Approx(Y[29]).epsilon(1e-14));
  CHECK(pe.var[2] == 0.0);
  CHECK(std::isfinite(pe.mean[3]));
  CHECK(pe.var[3] > 0.0);

  OkOptions smooth;
  smooth.at_data = OkAtData::Smoothed;
  OkPrediction ps = ok_predict(m, X, Y, Xstar, smooth);
  for (int s = 0; s < 3; ++s) {
    CHECK(ps.error_code[s] == 0);
    CHECK(ps.var[s] > 1e-4);  // nugget convention keeps predictive spread
  }
}

TEST_CASE("decorrelated limit reverts to the mean and full sill") {
  VariogramModel m;
  m.family = KernelFamily::PowerExp;
  m.p = 2.0;
  m.nugget_k = 0.2;
  m.partial_sill = 0.8;
  m.range = 0.05;

  SUBCASE("single faraway neighbor") {
    Eigen::MatrixXd X(1, 1);
    X << 0.2;
    Eigen::VectorXd Y(1);
    Y << 3.7;
    Eigen::MatrixXd Xstar(1, 1);
    Xstar << 0.9;
    OkPrediction p = ok_predict(m, X, Y, Xstar, {});
    CHECK(p.error_code[0] == 0);
    CHECK(p.mean[0] == doctest::Approx(3.7).epsilon(1e-12));
    CHECK(p.var[0] == doctest::Approx(1.0).epsilon(1e-9));  // sill + nugget
  }
  SUBCASE("two symmetric neighbors") {
    Eigen::MatrixXd X(2, 1);
    X << 0.10, 0.11;
    Eigen::VectorXd Y(2);
    Y << 2.0, 4.0;
    Eigen::MatrixXd Xstar(1, 1);
    Xstar << 0.95;
    OkPrediction p = ok_predict(m, X, Y, Xstar, {});
    CHECK(p.error_code[0] == 0);
    CHECK(p.mean[0] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(p.var[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("full-neighborhood smoothed kriging equals dense gp prediction") {
  RngStream rng(406);
  const int n = 50;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    Y[i] = std::sin(3.0 * X(i, 0)) + X(i, 1) + 0.3 * rng.normal();
  }
  Eigen::MatrixXd Xstar(10, 2);
  for (int s = 0; s < 10; ++s) {
    Xstar(s, 0) = rng.uniform();
    Xstar(s, 1) = rng.uniform();
  }
  VariogramModel m;
  m.family = KernelFamily::Matern;
  m.nu = 2.5;
  m.nugget_k = 0.15;
  m.partial_sill = 0.9;
  m.range = 0.25;

  OkOptions opt;
  opt.m = n;
  OkPrediction p = ok_predict(m, X, Y, Xstar, opt);

  GPFit fit = gp_condition(vgram_to_kernel(m), X, Y, true);
  PredictiveDistribution oracle = gp_predict(fit, Xstar, false, true);
  for (int s = 0; s < 10; ++s) {
    CHECK(p.error_code[s] == 0);
    CHECK(p.mean[s] == doctest::Approx(oracle.mean[s]).epsilon(1e-10));
    CHECK(p.var[s] == doctest::Approx(oracle.var[s]).epsilon(1e-10));
  }
}

TEST_CASE("radius neighborhoods: floor, empty-site code, clamped m") {
  RngStream rng(407);
  const int n = 40;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = rng.uniform();
    X(i, 1) = rng.uniform();
    Y[i] = rng.normal();
  }
  VariogramModel m;
  m.family = KernelFamily::PowerExp;
  m.p = 2.0;
  m.nugget_k = 0.05;
  m.partial_sill = 1.0;
  m.range = 0.3;

  Eigen::VectorXd site(2);
  site << 0.5, 0.5;
  std::vector<double> dist(n);
  for (int i = 0; i < n; ++i) dist[i] = (X.row(i).transpose() - site).norm();
  std::sort(dist.begin(), dist.end());
  const double r_small = 0.5 * (dist[2] + dist[3]);  // catches exactly 3 points

  Eigen::MatrixXd Xstar(2, 2);
  Xstar.row(0) = site.transpose();
  Xstar.row(1) << 50.0, 50.0;  // far outside every radius

  OkOptions radius_opt;
  radius_opt.radius = r_small;
  OkPrediction pr = ok_predict(m, X, Y, Xstar, radius_opt);

  // sparse-but-nonempty radius is upgraded to the 10 nearest neighbors
  OkOptions ten;
  ten.m = 10;
  OkPrediction p10 = ok_predict(m, X, Y, Xstar.topRows(1), ten);
  CHECK(pr.error_code[0] == 0);
  CHECK(pr.mean[0] == doctest::Approx(p10.mean[0]).epsilon(1e-12));
  CHECK(pr.var[0] == doctest::Approx(p10.var[0]).epsilon(1e-12));

  // empty neighborhood is reported per site and never aborts the batch
  CHECK(pr.error_code[1] == 1);
  CHECK(std::isnan(pr.mean[1]));
  CHECK(std::isnan(pr.var[1]));

  // oversized m silently clamps to n
  OkOptions big;
  big.m = 500;
  OkOptions all;
  all.m = n;
  OkPrediction pb = ok_predict(m, X, Y, Xstar.topRows(1), big);
  OkPrediction pa = ok_predict(m, X, Y, Xstar.topRows(1), all);
  CHECK(pb.mean[0] == doctest::Approx(pa.mean[0]).epsilon(1e-14));
  CHECK(pb.var[0] == doctest::Approx(pa.var[0]).epsilon(1e-14));
}

}
