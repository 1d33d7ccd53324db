#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "minegp/dataset.hpp"
#include "minegp/gp.hpp"
#include "minegp/lagp.hpp"
#include "minegp/vecchia.hpp"

namespace minegp {

class RngStream;

// Draw from N(mu, sigma2) conditioned on the value being <= upper. Inverse
// CDF through log-scale tail evaluation, so it stays exact arbitrarily far
// into the lower tail and never loops.
double sample_truncated_normal(double mu, double sigma2, double upper, RngStream& rng);

// mirror image: conditioned on the value being >= lower
double sample_truncated_normal_lower(double mu, double sigma2, double lower, RngStream& rng);

// --- sequential local imputation ---

struct LagpImputeResult {
  Eigen::VectorXd y_imp;                   // aligned with the X_cens rows
  std::vector<std::uint8_t> at_threshold;  // sites pinned to the limit after a failed fit
  std::vector<std::string> warnings;       // one entry per failure
};

// Censored sites visited in maximin order; each gets a local-GP predictive
// conditioned on the observed data plus everything imputed so far, then one
// truncated draw at its threshold. scales, when given, freeze the pre-scaled
// variant's coordinate scaling (estimated once from observed data upstream);
// nullptr runs the plain unscaled local model.
LagpImputeResult impute_lagp(const Eigen::MatrixXd& X_obs, const Eigen::VectorXd& Y_obs,
                             const Eigen::MatrixXd& X_cens, const Eigen::VectorXd& thresholds,
                             const LagpConfig& cfg, RngStream& rng,
                             const GlobalScales* scales = nullptr);

// --- epoch-based joint imputation ---

struct VecchiaImputeResult {
  Eigen::VectorXd y_imp;
  std::vector<std::uint8_t> fallback;  // filled by a single-site truncated draw
  std::vector<int> remaining;          // outstanding site count entering each epoch
  int epochs = 0;
};

// Rejection sampling in epochs under a frozen fit: joint unconstrained draw
// at all remaining censored sites conditioned on the observed data plus the
// sites accepted so far; coordinates below their threshold are accepted;
// repeat. After epoch_cap epochs the stragglers get independent single-site
// truncated draws from their marginal predictives and are flagged.
// Hyperparameters, coordinate scale, and centering all come from `fit` and
// are never re-estimated; X_obs/X_cens are on the same (unscaled) coordinate
// scale as the data the fit was trained on.
VecchiaImputeResult impute_vecchia(const Eigen::MatrixXd& X_obs, const Eigen::VectorXd& Y_obs,
                                   const Eigen::MatrixXd& X_cens,
                                   const Eigen::VectorXd& thresholds, const SVecchiaFit& fit,
                                   RngStream& rng, int epoch_cap = 100);

// --- multiple imputation ---

enum class ImputeEngine { Slagp, Svecchia };

struct ImputeOptions {
  int M = 5;
  ImputeEngine engine = ImputeEngine::Svecchia;
  SVecchiaOptions svecchia;  // fit options; the fit happens once, on observed data
  LagpConfig lagp;           // local-model config for the Slagp engine
  bool lagp_prescale = true;  // estimate global scales from observed data, then freeze
  int epoch_cap = 100;
};

struct Imputation {
  Eigen::VectorXd y_imp;               // censored-site values, D_cens row order
  PredictiveDistribution pred;         // at the requested prediction sites
  std::vector<std::uint8_t> fallback;  // per-site: filled by a fallback path
  int epochs = 0;                      // Svecchia engine only
  std::vector<std::string> warnings;
};

struct ImputationRun {
  int M = 0;
  std::uint64_t seed = 0;
  std::vector<Imputation> imputations;
};

// M independent imputations of the censored records, each completed by a
// prediction at Xstar conditioned on the observed records plus that
// imputation. Model hyperparameters are estimated once from the observed
// records and frozen. Thresholds come from d_cens.censor (falling back to
// its recorded-at-limit Y values); a Right censor direction mirrors the
// problem internally.
ImputationRun multiple_impute(const Dataset& d_obs, const Dataset& d_cens,
                              const Eigen::MatrixXd& Xstar, const ImputeOptions& opt,
                              RngStream& rng);

// Gaussian-mixture aggregation across the M predictive components at one
// prediction site: mean = avg mu_i, var = avg sigma2_i + avg mu_i^2 - mean^2.
std::pair<double, double> mixture_moments(const ImputationRun& run, int at);

// mixture_moments over every prediction site
PredictiveDistribution mixture_predictive(const ImputationRun& run);

// Any hole whose responses are all identical (a fully thresholded interval)
// collapses to its two endpoint records plus the record nearest the midway
// position; holes with three or fewer records, or any response variation,
// pass through unchanged. Idempotent.
Dataset collapse_flat_boreholes(const Dataset& d);

}  // namespace minegp
