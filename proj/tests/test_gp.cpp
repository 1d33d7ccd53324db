#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "minegp/gp.hpp"
#include "minegp/rng.hpp"

using namespace minegp;

namespace {

Eigen::MatrixXd random_points(RngStream& rng, int n, int d) {
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) X(i, k) = rng.uniform();
  return X;
}

// exact draw from N(0, Sigma) by dense factorization
Eigen::VectorXd mvn_draw(const Eigen::MatrixXd& Sigma, RngStream& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  REQUIRE(llt.info() == Eigen::Success);
  Eigen::VectorXd z(Sigma.rows());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return llt.matrixL() * z;
}

// from-scratch MVN log density with an independent linear solver
double mvn_logpdf_oracle(const Eigen::MatrixXd& Sigma, const Eigen::VectorXd& y) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Sigma);
  const double logdet = lu.matrixLU().diagonal().array().abs().log().sum();
  const double quad = y.dot(lu.solve(y));
  return -0.5 * y.size() * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * quad;
}

}  // namespace

TEST_SUITE("gp") {

TEST_CASE("log likelihood of independent standard normals") {
  Hyperparams phi;
  phi.tau2 = 1.0;
  phi.g = 0.0;
  phi.kernel = gaussian_kernel(0.25);

  Eigen::MatrixXd X1(1, 1);
  X1 << 0.0;
  Eigen::VectorXd y1(1);
  y1 << 0.0;
  // g=0 factorizes with the reported 1e-8 jitter, hence the 1e-7 tolerance
  CHECK(log_likelihood(phi, X1, y1) == doctest::Approx(-0.9189385332046727).epsilon(1e-7));

  // two sites far enough apart that the correlation underflows to zero
  Eigen::MatrixXd X2(2, 1);
  X2 << 0.0, 1000.0;
  Eigen::VectorXd y2(2);
  y2 << 1.0, 1.0;
  CHECK(log_likelihood(phi, X2, y2) == doctest::Approx(-std::log(2.0 * M_PI) - 1.0).epsilon(1e-7));
}

TEST_CASE("log likelihood matches a dense MVN oracle") {
  RngStream rng(301);
  for (int t = 0; t < 5; ++t) {
    Hyperparams phi;
    phi.tau2 = 0.5 + rng.uniform();
    phi.g = 0.05 + 0.2 * rng.uniform();
    phi.kernel = (t % 2 == 0) ? gaussian_kernel(0.2 + rng.uniform()) : matern_kernel(2.5, 0.2 + rng.uniform());
    Eigen::MatrixXd X = random_points(rng, 50, 2);
    Eigen::MatrixXd Sigma = cov_assemble(phi, X).sigma;
    Eigen::VectorXd y = mvn_draw(Sigma, rng);
    const double got = log_likelihood(phi, X, y);
    const double want = mvn_logpdf_oracle(Sigma, y);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("log likelihood is permutation invariant") {
  RngStream rng(302);
  Hyperparams phi;
  phi.tau2 = 1.2;
  phi.g = 0.1;
  phi.kernel = gaussian_kernel(0.3);
  Eigen::MatrixXd X = random_points(rng, 20, 2);
  Eigen::VectorXd y = mvn_draw(cov_assemble(phi, X).sigma, rng);
  const double base = log_likelihood(phi, X, y);

  std::vector<int> perm(20);
  for (int i = 0; i < 20; ++i) perm[i] = i;
  rng.shuffle(perm);
  Eigen::MatrixXd Xp(20, 2);
  Eigen::VectorXd yp(20);
  for (int i = 0; i < 20; ++i) {
    Xp.row(i) = X.row(perm[i]);
    yp[i] = y[perm[i]];
  }
  CHECK(log_likelihood(phi, Xp, yp) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("concentrated scale simple cases") {
  Eigen::MatrixXd X1(1, 1);
  X1 << 0.0;
  Eigen::VectorXd y1(1);
  y1 << 2.0;
  CHECK(concentrated_tau2(0.0, gaussian_kernel(1.0), X1, y1) == doctest::Approx(4.0).epsilon(1e-7));

  Eigen::MatrixXd X2(2, 1);
  X2 << 0.0, 1000.0;
  Eigen::VectorXd y2(2);
  y2 << 1.0, -1.0;
  CHECK(concentrated_tau2(0.0, gaussian_kernel(0.25), X2, y2) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("concentrated scale maximizes the likelihood over tau2") {
  RngStream rng(303);
  Hyperparams gen;
  gen.tau2 = 1.7;
  gen.g = 0.15;
  gen.kernel = gaussian_kernel(0.3);
  Eigen::MatrixXd X = random_points(rng, 30, 2);
  Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng);

  const double t2 = concentrated_tau2(gen.g, gen.kernel, X, y);
  auto ll_at = [&](double tau2) {
    Hyperparams phi = gen;
    phi.tau2 = tau2;
    return log_likelihood(phi, X, y);
  };
  const double at_hat = ll_at(t2);
  double best_grid = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 400; ++i) {
    const double tau2 = t2 * std::exp(-1.0 + 2.0 * i / 400.0);
    best_grid = std::max(best_grid, ll_at(tau2));
  }
  CHECK(at_hat >= best_grid - 1e-9);
  CHECK(at_hat >= ll_at(t2 * 1.001));
  CHECK(at_hat >= ll_at(t2 * 0.999));
}

TEST_CASE("profile log likelihood equals the full one at the concentrated scale") {
  RngStream rng(304);
  Hyperparams gen;
  gen.tau2 = 2.0;
  gen.g = 0.2;
  gen.kernel = matern_kernel(2.5, 0.4);
  Eigen::MatrixXd X = random_points(rng, 25, 2);
  Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng);

  const double t2 = concentrated_tau2(gen.g, gen.kernel, X, y);
  Hyperparams at;
  at.tau2 = t2;
  at.g = gen.g;
  at.kernel = gen.kernel;
  CHECK(profile_loglik(gen.g, gen.kernel, X, y) == doctest::Approx(log_likelihood(at, X, y)).epsilon(1e-12));
}

TEST_CASE("profile gradient matches central finite differences") {
  RngStream rng(305);
  int checked = 0;
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + static_cast<int>(rng.bounded(3));
    Eigen::MatrixXd X = random_points(rng, 40, d);
    Eigen::VectorXd th(d);
    for (int k = 0; k < d; ++k) th[k] = 0.1 + 0.6 * rng.uniform();
    Kernel kern;
    const int fam = t % 3;
    if (fam == 0)
      kern = gaussian_kernel(th);
    else if (fam == 1)
      kern = matern_kernel(2.5, th);
    else
      kern = matern_kernel(1.5, th);
    const double g = 0.05 + 0.3 * rng.uniform();

    Hyperparams gen;
    gen.tau2 = 1.0;
    gen.g = 0.1;
    gen.kernel = kern;
    Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng);

    Eigen::VectorXd grad = profile_gradient(g, kern, X, y);
    REQUIRE(grad.size() == 1 + d);

    auto pll = [&](double gg, const Eigen::VectorXd& tt) {
      Kernel k2 = kern;
      k2.theta = tt;
      return profile_loglik(gg, k2, X, y);
    };
    const double hg = 1e-5 * std::max(1.0, g);
    const double fd_g = (pll(g + hg, th) - pll(g - hg, th)) / (2.0 * hg);
    CHECK(std::abs(grad[0] - fd_g) / std::max(std::abs(fd_g), 1e-4) < 1e-5);
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd tp = th, tm = th;
      const double ht = 1e-5 * th[k];
      tp[k] += ht;
      tm[k] -= ht;
      const double fd = (pll(g, tp) - pll(g, tm)) / (2.0 * ht);
      CHECK(std::abs(grad[1 + k] - fd) / std::max(std::abs(fd), 1e-4) < 1e-5);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("gradient components swap when isotropic coordinates swap") {
  RngStream rng(306);
  Eigen::MatrixXd X = random_points(rng, 30, 2);
  Hyperparams gen;
  gen.tau2 = 1.0;
  gen.g = 0.1;
  gen.kernel = gaussian_kernel(Eigen::VectorXd::Constant(2, 0.3));
  Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng);

  Eigen::VectorXd th(2);
  th << 0.2, 0.5;
  Eigen::VectorXd g1 = profile_gradient(0.1, gaussian_kernel(th), X, y);

  Eigen::MatrixXd Xs(30, 2);
  Xs.col(0) = X.col(1);
  Xs.col(1) = X.col(0);
  Eigen::VectorXd ths(2);
  ths << th[1], th[0];
  Eigen::VectorXd g2 = profile_gradient(0.1, gaussian_kernel(ths), Xs, y);

  CHECK(g1[0] == doctest::Approx(g2[0]).epsilon(1e-10));
  CHECK(g1[1] == doctest::Approx(g2[2]).epsilon(1e-10));
  CHECK(g1[2] == doctest::Approx(g2[1]).epsilon(1e-10));
}

TEST_CASE("the fitted maximum is a stationary point and beats perturbations") {
  RngStream rng(307);
  Hyperparams gen;
  gen.tau2 = 2.0;
  gen.g = 0.15;
  gen.kernel = gaussian_kernel(0.2);
  Eigen::MatrixXd X = random_points(rng, 60, 1);
  Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng);

  GpOptions opt;
  opt.kernel = gaussian_kernel(0.0);  // nonpositive init -> automatic
  GPFit fit = fit_mle(X, y, opt);
  CHECK(fit.converged);

  Eigen::VectorXd grad = profile_gradient(fit.phi.g, fit.phi.kernel, X, fit.y);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-4);

  const double at_opt = profile_loglik(fit.phi.g, fit.phi.kernel, X, fit.y);
  for (int t = 0; t < 100; ++t) {
    Kernel kp = fit.phi.kernel;
    kp.theta[0] = std::max(1e-6, kp.theta[0] * std::exp(2.0 * (rng.uniform() - 0.5)));
    const double gp = std::max(1e-6, fit.phi.g * std::exp(2.0 * (rng.uniform() - 0.5)));
    CHECK(profile_loglik(gp, kp, X, fit.y) <= at_opt + 1e-8);
  }
}

TEST_CASE("fit invariants hold") {
  RngStream rng(308);
  Hyperparams gen;
  gen.tau2 = 1.5;
  gen.g = 0.1;
  gen.kernel = matern_kernel(2.5, 0.3);
  Eigen::MatrixXd X = random_points(rng, 40, 2);
  Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng).array() + 3.0;

  GpOptions opt;
  opt.kernel = matern_kernel(2.5, 0.0);
  GPFit fit = fit_mle(X, y, opt);

  // reported loglik equals an independent recomputation on the centered data
  CHECK(fit.loglik == doctest::Approx(log_likelihood(fit.phi, X, fit.y)).epsilon(1e-10));

  // cached factor reproduces the correlation-scale covariance
  const double ge = fit.phi.g + fit.jitter;
  Eigen::MatrixXd A = kernel_matrix_sym(fit.phi.kernel, X);
  A.diagonal().array() += ge;
  Eigen::MatrixXd L = fit.chol.matrixL();
  CHECK(((L * L.transpose()) - A).cwiseAbs().maxCoeff() < 1e-8 * A.cwiseAbs().maxCoeff());

  // alpha solves the centered system
  CHECK((A * fit.alpha - fit.y).cwiseAbs().maxCoeff() < 1e-8);

  CHECK(fit.ymean == doctest::Approx(y.mean()).epsilon(1e-12));
  CHECK(fit.g_at_lower == (std::abs(fit.phi.g - opt.g_lo) <= 1e-6));
}

TEST_CASE("parameters of a known surface are recovered") {
  RngStream rng(309);
  Hyperparams gen;
  gen.tau2 = 2.0;
  gen.g = 0.1;
  gen.kernel = gaussian_kernel(0.5);
  Eigen::MatrixXd X = random_points(rng, 400, 1);
  X *= 3.0;  // wider domain so the lengthscale is identifiable
  Eigen::VectorXd y = mvn_draw(cov_assemble(gen, X).sigma, rng);

  GpOptions opt;
  opt.kernel = gaussian_kernel(0.0);
  GPFit fit = fit_mle(X, y, opt);
  CHECK(fit.phi.kernel.theta[0] == doctest::Approx(0.5).epsilon(0.25));
  CHECK(fit.phi.g == doctest::Approx(0.1).epsilon(0.25));
}

TEST_CASE("all-zero responses raise the degenerate-scale error") {
  Eigen::MatrixXd X(5, 1);
  X << 0.1, 0.3, 0.5, 0.7, 0.9;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(5);
  GpOptions opt;
  opt.kernel = gaussian_kernel(0.1);
  opt.center = false;
  CHECK_THROWS_AS(fit_mle(X, y, opt), DegenerateScaleError);
}

TEST_CASE("prediction interpolates noiseless data and reverts far away") {
  RngStream rng(310);
  Eigen::MatrixXd X = random_points(rng, 15, 1);
  Eigen::VectorXd y(15);
  for (int i = 0; i < 15; ++i) y[i] = std::sin(3.0 * X(i, 0)) + 2.0;

  Hyperparams phi;
  phi.tau2 = 1.0;
  phi.g = 0.0;  // jitter path
  phi.kernel = gaussian_kernel(0.1);
  GPFit fit = gp_condition(phi, X, y);
  CHECK(fit.jitter == doctest::Approx(1e-8).epsilon(1e-12));

  PredictiveDistribution at_train = gp_predict(fit, X, false, false);
  CHECK((at_train.mean - y).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(at_train.var.maxCoeff() < 1e-5);
  CHECK(at_train.var.minCoeff() >= 0.0);

  Eigen::MatrixXd Xfar(1, 1);
  Xfar << 500.0;
  PredictiveDistribution far_latent = gp_predict(fit, Xfar, false, false);
  CHECK(far_latent.mean[0] == doctest::Approx(y.mean()).epsilon(1e-10));
  CHECK(far_latent.var[0] == doctest::Approx(phi.tau2).epsilon(1e-10));
}

TEST_CASE("prediction matches the dense conditioning oracle") {
  RngStream rng(311);
  Hyperparams phi;
  phi.tau2 = 1.4;
  phi.g = 0.2;
  phi.kernel = matern_kernel(2.5, 0.35);
  Eigen::MatrixXd X = random_points(rng, 5, 2);
  Eigen::VectorXd y = mvn_draw(cov_assemble(phi, X).sigma, rng).array() + 1.0;
  Eigen::MatrixXd Xs = random_points(rng, 4, 2);

  GPFit fit = gp_condition(phi, X, y);
  PredictiveDistribution pred = gp_predict(fit, Xs, true, true);

  Eigen::MatrixXd Sigma = cov_assemble(phi, X).sigma;
  Eigen::MatrixXd Ks = cov_cross(phi, Xs, X);
  Eigen::MatrixXd Sss = cov_assemble(phi, Xs).sigma;  // includes the noise diagonal
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Sigma);
  Eigen::VectorXd yc = y.array() - y.mean();
  Eigen::VectorXd mu = Ks * lu.solve(yc);
  mu.array() += y.mean();
  Eigen::MatrixXd cov = Sss - Ks * lu.solve(Ks.transpose());

  CHECK((pred.mean - mu).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(pred.cov.has_value());
  CHECK((*pred.cov - cov).cwiseAbs().maxCoeff() < 1e-9);

  // diagonal of the full covariance equals the pointwise variances
  PredictiveDistribution pointwise = gp_predict(fit, Xs, false, true);
  CHECK((pred.cov->diagonal() - pointwise.var).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pred.var - pointwise.var).cwiseAbs().maxCoeff() < 1e-12);

  // noise convention: include_noise adds exactly tau2*g pointwise
  PredictiveDistribution latent = gp_predict(fit, Xs, false, false);
  CHECK(((pointwise.var - latent.var).array() - phi.tau2 * phi.g).abs().maxCoeff() < 1e-12);
}

TEST_CASE("centering can be disabled for pre-centered data") {
  RngStream rng(312);
  Hyperparams phi;
  phi.tau2 = 1.0;
  phi.g = 0.1;
  phi.kernel = gaussian_kernel(0.3);
  Eigen::MatrixXd X = random_points(rng, 20, 1);
  Eigen::VectorXd y = mvn_draw(cov_assemble(phi, X).sigma, rng);
  Eigen::VectorXd yc = y.array() - y.mean();

  GPFit a = gp_condition(phi, X, yc, false);
  GPFit b = gp_condition(phi, X, yc, true);
  Eigen::MatrixXd Xs = random_points(rng, 3, 1);
  PredictiveDistribution pa = gp_predict(a, Xs);
  PredictiveDistribution pb = gp_predict(b, Xs);
  CHECK((pa.mean - pb.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pa.var - pb.var).cwiseAbs().maxCoeff() < 1e-12);
}

}  // TEST_SUITE
