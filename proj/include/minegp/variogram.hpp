#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "minegp/gp.hpp"
#include "minegp/kernel.hpp"

namespace minegp {

struct EmpiricalVariogram {
  Eigen::VectorXd bin_edges;    // k+1 edges, first 0; bins (e_{b}, e_{b+1}] with [0, e_1]
  Eigen::VectorXd bin_centers;  // k midpoints
  Eigen::VectorXd gamma_hat;    // per-bin semivariance, NaN marks an empty bin
  Eigen::VectorXi pair_counts;
};

struct VariogramModel {
  KernelFamily family = KernelFamily::PowerExp;
  double p = 2.0;   // PowerExp exponent
  double nu = 2.5;  // Matern smoothness
  double nugget_k = 0.0;     // noise at any h > 0
  double partial_sill = 1.0; // sigma^2, covariance span
  double range = 1.0;        // R, the root lengthscale
};

// Unordered pairs counted once; gamma_hat[b] = sum (y_i - y_j)^2 / (2 count_b).
EmpiricalVariogram empirical_semivariogram(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                                           double bin_width, double h_max);

// 0 at h=0; nugget_k + partial_sill (1 - corr(h)) for h > 0, with the
// correlation shared with the kernel via the range translation below.
double model_semivariogram(const VariogramModel& m, double h);

enum class NlsWeights { Equal, PairCount };

struct NlsOptions {
  NlsWeights weights = NlsWeights::Equal;
  double h_max_fit = std::numeric_limits<double>::infinity();  // restrict fitted bins
  // nonpositive bound entries are replaced by data-driven defaults
  double nugget_lo = 1e-4, nugget_hi = -1.0;
  double sill_lo = -1.0, sill_hi = -1.0;
  double range_lo = -1.0, range_hi = -1.0;
};

struct NlsFit {
  VariogramModel model;
  bool converged = false;
  double sse = 0.0;  // weighted criterion value at the returned model
};

// Weighted least squares of the model to non-empty bins with centers within
// h_max_fit; deterministic multistart, best iterate returned even when the
// optimizer fails to converge. proto carries family/p/nu (its parameter
// fields, when positive, seed one of the starts).
NlsFit fit_nls(const EmpiricalVariogram& ev, const VariogramModel& proto, const NlsOptions& opt = {});

// theta = R^2 (R^p for PowerExp with p != 2), tau2 = partial sill,
// g = nugget_k / partial_sill.
Hyperparams vgram_to_kernel(const VariogramModel& m);
// inverse; requires an isotropic kernel
VariogramModel kernel_to_vgram(const Hyperparams& phi);

enum class OkAtData { Exact, Smoothed };

struct OkOptions {
  int m = 50;            // neighborhood size (clamped to n)
  double radius = -1.0;  // > 0 switches to radius search with a 10-neighbor floor
  OkAtData at_data = OkAtData::Smoothed;
};

struct OkPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  // 0 ok, 1 empty radius neighborhood, 2 local factorization failed;
  // failed sites carry NaN mean/var and are skipped, never fatal
  std::vector<int> error_code;
};

// Local kriging: per site, neighbors by count or radius, then MVN conditioning
// under the variogram-implied covariance on globally centered responses.
// at_data=Exact returns (observed value, 0) where a site coincides with a
// training point; Smoothed keeps the nugget convention everywhere.
OkPrediction ok_predict(const VariogramModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const Eigen::MatrixXd& Xstar, const OkOptions& opt = {});

}  // namespace minegp
