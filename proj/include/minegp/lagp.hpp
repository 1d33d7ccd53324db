#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "minegp/gp.hpp"
#include "minegp/kernel.hpp"
#include "minegp/spatial.hpp"

namespace minegp {

struct LagpConfig {
  int m = 50;
  NeighborhoodMethod method = NeighborhoodMethod::ALC;
  bool local_isotropic = true;  // single local lengthscale; false = local ARD
  // family/p/nu template for the local kernels; nonpositive theta entries
  // request the fitter's automatic initialization
  Kernel kernel;
  double g_init = 0.1;
  double g_lo = 1e-6, g_hi = 1e4;      // g_lo is also the remediation trigger
  double theta_lo = 1e-6, theta_hi = 1e4;
  int n0 = 6;             // ALC seed size (nearest points)
  int cand_limit = 1000;  // ALC candidate window per step
  bool include_noise = true;  // predictive variance convention
  // global lengthscale estimation for the pre-scaled variant
  int scale_blocks = 4;
  int scale_block_size = 300;
  std::uint64_t seed = 0;

  LagpConfig() { kernel.theta = Eigen::VectorXd::Constant(1, -1.0); }
};

struct LocalFit {
  Eigen::VectorXd site;
  Neighborhood neighborhood;
  Hyperparams phi_hat;   // local MLE on the neighborhood
  double mean = std::numeric_limits<double>::quiet_NaN();
  double var = std::numeric_limits<double>::quiet_NaN();
  bool nugget_at_bound = false;  // ghat within 1e-6 of the search lower bound
  int error_code = 0;            // 0 ok; 1 local fit failed after retry
};

struct LagpResult {
  std::vector<LocalFit> fits;    // one per prediction site, input order
  PredictiveDistribution pred;   // pointwise gather of the fits (NaN on error)
  GlobalScales scales;           // populated by the pre-scaled variant
  bool prescaled = false;
};

// Neighborhood around x, local MLE on that subset, prediction at x.
// m is clamped to n; per-site failures are reported in error_code.
LocalFit lagp_predict_one(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                          const Eigen::VectorXd& x, const LagpConfig& cfg = {});

// Independent per-site prediction; output order matches Xstar, failures are
// per-site and never abort the batch. Deterministic regardless of threading.
LagpResult lagp_predict_batch(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              const Eigen::MatrixXd& Xstar, const LagpConfig& cfg = {});

// Estimate global ARD lengthscales on random blocks, divide every coordinate
// by the square root, then run the batch with isotropic local kernels in the
// scaled space. A caller-supplied scale vector skips the estimation.
LagpResult slagp_predict_batch(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                               const Eigen::MatrixXd& Xstar, const LagpConfig& cfg = {},
                               const GlobalScales* scales = nullptr);

// Replace every bound-pinned local nugget by the median nugget of the
// non-pinned fits, recomputing mean/var on the same neighborhood with the
// same lengthscales (scale re-concentrated under the new nugget). X and Y
// must be the training data the fits were produced against — for pre-scaled
// batches that is prescale_inputs(X, result.scales.theta). Throws when every
// usable fit is at the bound.
std::vector<LocalFit> remediate_nuggets(const std::vector<LocalFit>& fits,
                                        const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                        bool include_noise = true);

}  // namespace minegp
