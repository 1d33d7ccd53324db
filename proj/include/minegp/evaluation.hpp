#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "minegp/dataset.hpp"
#include "minegp/gp.hpp"
#include "minegp/lagp.hpp"
#include "minegp/variogram.hpp"
#include "minegp/vecchia.hpp"

namespace minegp {

class RngStream;

// --- scoring rules ---

double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& mu);

// -log|Sigma| - r' Sigma^{-1} r  (higher is better); throws on a non-PD Sigma
double score_full(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& Sigma);

// the diagonal specialization: -sum log var_i - sum r_i^2 / var_i
double score_pointwise(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                       const Eigen::VectorXd& var);

// -(1/N') sum log Phi((threshold_i - mu_i)/sigma_i): mean negative log
// probability that the value sits below its detection limit. Log-CDF tail
// evaluation keeps it finite for any finite inputs.
double log_loss_censored(const Eigen::VectorXd& thresholds, const Eigen::VectorXd& mu,
                         const Eigen::VectorXd& var);

// --- hole-preserving folds ---

struct FoldAssignment {
  int K = 0;
  std::unordered_map<std::string, int> fold_of_hole;
  std::vector<int> fold_of_record;  // derived: each record gets its hole's fold
};

// Shuffle the distinct holes, then assign each to the fold currently holding
// the fewest records. Throws when there are fewer holes than folds.
FoldAssignment borehole_folds(const std::vector<std::string>& hole_ids, int K, RngStream& rng);

// --- models under evaluation ---

enum class CvModel { GpSubset, Lagp, Slagp, Svecchia, Ok };

struct CvConfig {
  CvModel model = CvModel::Svecchia;
  std::uint64_t seed = 0;

  int subset_m = 2000;  // GpSubset: random training subset size (clamped)
  GpOptions gp;
  LagpConfig lagp;
  SVecchiaOptions svecchia;

  // ordinary-kriging pipeline: empirical semivariogram, least-squares model
  // fit, then local kriging prediction
  VariogramModel ok_proto;
  NlsOptions ok_nls;
  OkOptions ok;
  double ok_bin_width = -1.0;  // nonpositive: bounding-box diagonal / 30
  double ok_h_max = -1.0;      // nonpositive: half the bounding-box diagonal

  // full-covariance score is computed only up to this held-out size (the
  // dense test covariance is quadratic in it); larger folds report score_p
  // alone. Models with strictly pointwise predictives never report score_f.
  int score_f_limit = 2500;
};

struct MetricsRecord {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> score_f;
  double score_p = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> log_loss;  // censored test records only
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
  int n_errors = 0;  // per-site failures excluded from rmse/score_p
};

// Train on `train`, predict the `test` records, score. Error-coded sites are
// excluded from rmse/score_p and counted. The rng drives any subsampling the
// model performs (GpSubset).
MetricsRecord run_holdout(const Dataset& train, const Dataset& test, const CvConfig& cfg,
                          RngStream& rng);

struct CvResult {
  FoldAssignment folds;
  std::vector<MetricsRecord> per_fold;
  MetricsRecord summary;  // means over folds (n_errors and times summed)
};

// K-fold cross-validation holding out whole boreholes (records are their own
// "holes" when the dataset has no hole ids). Fold assignment depends only on
// cfg.seed and the hole ids, so different models under one seed share folds.
CvResult run_cv(const Dataset& d, int K, const CvConfig& cfg);

// --- subset baseline ---

// Exact GP fit on a uniform random m-subset (without replacement; the subset
// is used in index order, so m = n reproduces the full fit).
GPFit subset_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, int m, RngStream& rng,
                const GpOptions& opt = {});

// --- emission ---
// All floating-point text is written with up to 17 significant digits, enough
// to round-trip doubles exactly. With include_timing=false the wall-clock
// fields are left out, making the documents stable across reruns.

std::string cv_metrics_json(const CvResult& r, bool include_timing = true);
std::string cv_metrics_csv(const CvResult& r, bool include_timing = true);

// comparative document: several models evaluated over shared folds
struct NamedCv {
  std::string model;
  CvResult result;
};

std::string cv_metrics_json(const std::vector<NamedCv>& runs, int K, std::uint64_t seed,
                            const std::string& fingerprint = "", bool include_timing = true);
std::string cv_metrics_csv(const std::vector<NamedCv>& runs, bool include_timing = true);

}  // namespace minegp
