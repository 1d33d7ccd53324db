#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "minegp/gp.hpp"
#include "minegp/kernel.hpp"
#include "minegp/optimize.hpp"

namespace minegp {

class RngStream;

enum class VecchiaOrdering { Maximin, Random, Given };

// Ordering plus per-point conditioning sets. Everything downstream indexes
// positions in the ordering: order[k] is the original row of ordered point k,
// and c[k] holds ordered positions < k (nearest predecessors, distance order).
struct ConditioningSets {
  std::vector<int> order;
  std::vector<std::vector<int>> c;
  int m = 0;
};

// c(i) = the min(i, m) nearest predecessors of ordered point i (0-based), in
// the metric of the supplied coordinates. `given` supplies the ordering when
// ordering == Given; `seed` drives the Random ordering.
ConditioningSets build_conditioning_sets(const Eigen::MatrixXd& X, int m,
                                         VecchiaOrdering ordering = VecchiaOrdering::Maximin,
                                         const std::vector<int>* given = nullptr,
                                         std::uint64_t seed = 0);

// One column of the sparse upper-triangular precision factor U (UU' = Sigma^{-1}):
// diagonal 1/sigma_i, entries -b_j/sigma_i at the conditioning positions, where
// b solves the local covariance system and sigma_i^2 is the conditional variance
// of ordered point i given its conditioning set (absolute scale, nugget included).
struct UColumn {
  int i = 0;                 // ordered position
  double diag = 0.0;         // 1/sigma_i
  double sigma2 = 0.0;       // conditional variance
  std::vector<int> rows;     // ordered positions (the conditioning set)
  std::vector<double> vals;  // -b_j/sigma_i, aligned with rows
};

UColumn u_column(const Hyperparams& phi, const Eigen::MatrixXd& X, const ConditioningSets& cs,
                 int i);

struct SparseUFactor {
  int n = 0;
  std::vector<double> diag;                // 1/sigma_i per ordered column
  std::vector<double> sigma2;              // cached conditional variances
  std::vector<std::vector<int>> rows;      // off-diagonal row positions per column
  std::vector<std::vector<double>> vals;   // matching entries
  std::int64_t nnz() const;
};

// All columns (parallel map).
SparseUFactor build_u(const Hyperparams& phi, const Eigen::MatrixXd& X,
                      const ConditioningSets& cs);

// "row col value" lines, one per nonzero, for debugging.
std::string u_factor_coordinate_list(const SparseUFactor& u);

// Sum of conditional normal log densities of zero-mean Y under the ordering
// and conditioning sets; equals the dense log likelihood when every set holds
// all predecessors. Never assembles an N x N matrix.
double vecchia_loglik(const Hyperparams& phi, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                      const ConditioningSets& cs);

// Profile version (scale concentrated out) and its analytic gradient
// (d/dg, d/dtheta_0, ...); tau2_hat_out receives the concentrated scale.
double vecchia_profile_loglik(double g, const Kernel& kernel, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& Y, const ConditioningSets& cs,
                              Eigen::VectorXd* grad = nullptr, double* tau2_hat_out = nullptr);

struct SVecchiaOptions {
  int m = 25;
  int max_rounds = 3;
  Kernel kernel;  // family template; theta is ignored (ARD, data-driven init)
  double g_init = 0.1;
  double g_lo = 1e-6, g_hi = 1e4;
  double theta_lo = 1e-6, theta_hi = 1e4;
  VecchiaOrdering ordering = VecchiaOrdering::Maximin;
  std::uint64_t seed = 0;  // Random ordering only
  BoxOptions opt{};
  bool center = true;

  SVecchiaOptions() {
    kernel = Kernel::matern(2.5, 1.0);
    // a large-n budget: analytic gradients land within a few dozen steps and
    // the rescale rounds restart near the optimum anyway
    opt.max_iters = 60;
    opt.gtol = 1e-4;
    opt.max_fevals = 150;
  }
};

struct SVecchiaFit {
  Hyperparams phi;         // hyperparameters in the scaled coordinates
  Hyperparams phi_orig;    // equivalent kernel in the original coordinates
  Eigen::VectorXd scale;   // accumulated theta products; inputs divide by sqrt(scale)
  Eigen::MatrixXd Xs;      // scaled training inputs (original row order)
  Eigen::VectorXd y;       // centered responses
  double ymean = 0.0;
  ConditioningSets cs;     // over Xs
  SparseUFactor U;         // cached training factor
  double loglik = 0.0;     // vecchia log likelihood at phi
  int rounds = 0;
  bool scale_converged = false;  // lengthscale change fell under 5%
  bool converged = false;        // final inner optimization converged
};

// Alternate maximizing the Vecchia likelihood over (g, ARD theta) with
// rescaling inputs by sqrt(theta_hat) and rebuilding ordering/conditioning
// sets, until the lengthscales stabilize (within 5% of one) or max_rounds.
SVecchiaFit fit_svecchia(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                         const SVecchiaOptions& opt = {});

// Joint prediction pieces: test sites ordered maximin among themselves and
// appended after the training block; each conditions on its m nearest
// training-or-earlier-test points (training only, when requested). Holding
// the struct allows repeated joint draws without re-factorizing.
struct VecchiaPredictor {
  Eigen::VectorXd mean;  // input order, response scale
  Eigen::VectorXd var;   // input order, nugget included
  std::vector<int> order;                   // ordered position -> Xstar row
  std::vector<double> sigma;                // conditional sd per position
  std::vector<double> mu_train;             // training contribution per position (centered)
  std::vector<std::vector<int>> ctest;      // earlier-test positions per position
  std::vector<std::vector<double>> btest;   // matching kriging weights
  double ymean = 0.0;

  // One draw from the joint predictive (input order, response scale).
  Eigen::VectorXd draw(RngStream& rng) const;
};

VecchiaPredictor make_vecchia_predictor(const Hyperparams& phi, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& Y, const Eigen::MatrixXd& Xstar,
                                        int m, bool training_only = false, bool center = true);

// Mean/variance (and optionally the dense joint covariance) in Xstar order.
PredictiveDistribution vecchia_predict(const Hyperparams& phi, const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& Y, const Eigen::MatrixXd& Xstar,
                                       int m, bool full_cov = false, bool training_only = false);

// Prediction under a scaled-Vecchia fit: scales Xstar, then predicts with the
// fitted hyperparameters on the scaled training inputs.
PredictiveDistribution svecchia_predict(const SVecchiaFit& fit, const Eigen::MatrixXd& Xstar,
                                        bool full_cov = false, bool training_only = false);

VecchiaPredictor make_svecchia_predictor(const SVecchiaFit& fit, const Eigen::MatrixXd& Xstar,
                                         bool training_only = false);

}  // namespace minegp
