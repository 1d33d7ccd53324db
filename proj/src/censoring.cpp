#include "minegp/censoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "minegp/rng.hpp"
#include "minegp/spatial.hpp"
#include "minegp/stats.hpp"

namespace minegp {

double sample_truncated_normal(double mu, double sigma2, double upper, RngStream& rng) {
  if (!(sigma2 > 0.0))
    throw std::invalid_argument("sample_truncated_normal: variance must be positive");
  const double sigma = std::sqrt(sigma2);
  const double alpha = (upper - mu) / sigma;
  // F^{-1}(u F(alpha)) computed in log space, exact deep into the tail
  const double logp = norm_cdf_log(alpha) + std::log(rng.uniform());
  const double z = norm_quantile_from_log(logp);
  const double v = mu + sigma * z;
  return std::min(v, upper);  // guard the <= bound against roundoff
}

double sample_truncated_normal_lower(double mu, double sigma2, double lower, RngStream& rng) {
  return -sample_truncated_normal(-mu, sigma2, -lower, rng);
}

// --- sequential local imputation ---

LagpImputeResult impute_lagp(const Eigen::MatrixXd& X_obs, const Eigen::VectorXd& Y_obs,
                             const Eigen::MatrixXd& X_cens, const Eigen::VectorXd& thresholds,
                             const LagpConfig& cfg, RngStream& rng, const GlobalScales* scales) {
  const int nobs = static_cast<int>(X_obs.rows());
  const int nc = static_cast<int>(X_cens.rows());
  const int d = static_cast<int>(X_obs.cols());
  if (nobs < 1) throw std::invalid_argument("impute_lagp: observed data is empty");
  if (Y_obs.size() != nobs) throw std::invalid_argument("impute_lagp: X_obs/Y_obs size mismatch");
  if (nc > 0 && X_cens.cols() != d)
    throw std::invalid_argument("impute_lagp: censored sites have wrong dimension");
  if (thresholds.size() != nc)
    throw std::invalid_argument("impute_lagp: one threshold per censored site required");

  LagpImputeResult res;
  res.y_imp.resize(nc);
  res.at_threshold.assign(static_cast<size_t>(nc), 0);
  if (nc == 0) return res;

  // working geometry: frozen pre-scaling when provided
  Eigen::MatrixXd Xw, Xc;
  LagpConfig local = cfg;
  if (scales) {
    if (scales->theta.size() != 1 && scales->theta.size() != d)
      throw std::invalid_argument("impute_lagp: scale vector does not match input dimension");
    Xw = prescale_inputs(X_obs, scales->theta);
    Xc = prescale_inputs(X_cens, scales->theta);
    local.local_isotropic = true;  // one lengthscale suffices after scaling
  } else {
    Xw = X_obs;
    Xc = X_cens;
  }

  const std::vector<int> order = maximin_order(Xc);

  Eigen::MatrixXd Xstack(nobs + nc, d);
  Eigen::VectorXd ystack(nobs + nc);
  Xstack.topRows(nobs) = Xw;
  ystack.head(nobs) = Y_obs;
  int nstack = nobs;

  for (int k : order) {
    const Eigen::VectorXd x = Xc.row(k).transpose();
    double y;
    LocalFit fit;
    std::string note;
    try {
      fit = lagp_predict_one(Xstack.topRows(nstack), ystack.head(nstack), x, local);
      if (fit.error_code != 0 || !std::isfinite(fit.mean) || !(fit.var > 0.0)) {
        std::ostringstream os;
        os << "local fit failed (code " << fit.error_code << ")";
        note = os.str();
      }
    } catch (const std::exception& e) {
      note = std::string("local fit threw: ") + e.what();
    }
    if (!note.empty()) {
      y = thresholds[k];
      res.at_threshold[static_cast<size_t>(k)] = 1;
      std::ostringstream os;
      os << "censored site " << k << ": " << note << "; imputed at its threshold";
      res.warnings.push_back(os.str());
    } else {
      y = sample_truncated_normal(fit.mean, fit.var, thresholds[k], rng);
    }
    res.y_imp[k] = y;
    Xstack.row(nstack) = Xc.row(k);
    ystack[nstack] = y;
    ++nstack;
  }
  return res;
}

// --- epoch-based joint imputation ---

VecchiaImputeResult impute_vecchia(const Eigen::MatrixXd& X_obs, const Eigen::VectorXd& Y_obs,
                                   const Eigen::MatrixXd& X_cens,
                                   const Eigen::VectorXd& thresholds, const SVecchiaFit& fit,
                                   RngStream& rng, int epoch_cap) {
  const int nobs = static_cast<int>(X_obs.rows());
  const int nc = static_cast<int>(X_cens.rows());
  const int d = static_cast<int>(X_obs.cols());
  if (nobs < 1) throw std::invalid_argument("impute_vecchia: observed data is empty");
  if (Y_obs.size() != nobs)
    throw std::invalid_argument("impute_vecchia: X_obs/Y_obs size mismatch");
  if (nc > 0 && X_cens.cols() != d)
    throw std::invalid_argument("impute_vecchia: censored sites have wrong dimension");
  if (thresholds.size() != nc)
    throw std::invalid_argument("impute_vecchia: one threshold per censored site required");
  if (fit.scale.size() != d)
    throw std::invalid_argument("impute_vecchia: fit was trained in a different dimension");
  if (epoch_cap < 1) throw std::invalid_argument("impute_vecchia: epoch cap must be positive");

  VecchiaImputeResult res;
  res.y_imp.resize(nc);
  res.fallback.assign(static_cast<size_t>(nc), 0);
  if (nc == 0) return res;

  const Eigen::MatrixXd Xobs_s = prescale_inputs(X_obs, fit.scale);
  const Eigen::MatrixXd Xcen_s = prescale_inputs(X_cens, fit.scale);

  // conditioning stack: observed data plus accepted draws, centered the way
  // the frozen fit centers
  Eigen::MatrixXd Xstack(nobs + nc, d);
  Eigen::VectorXd ystack(nobs + nc);
  Xstack.topRows(nobs) = Xobs_s;
  ystack.head(nobs) = Y_obs.array() - fit.ymean;
  int nstack = nobs;

  std::vector<int> remaining(static_cast<size_t>(nc));
  std::iota(remaining.begin(), remaining.end(), 0);

  int epoch = 0;
  while (!remaining.empty() && epoch < epoch_cap) {
    res.remaining.push_back(static_cast<int>(remaining.size()));
    Eigen::MatrixXd Xrem(static_cast<Eigen::Index>(remaining.size()), d);
    for (size_t a = 0; a < remaining.size(); ++a)
      Xrem.row(static_cast<Eigen::Index>(a)) = Xcen_s.row(remaining[a]);

    VecchiaPredictor pr =
        make_vecchia_predictor(fit.phi, Xstack.topRows(nstack), ystack.head(nstack), Xrem,
                               fit.cs.m, /*training_only=*/false, /*center=*/false);
    const Eigen::VectorXd draw = pr.draw(rng);

    std::vector<int> keep;
    keep.reserve(remaining.size());
    for (size_t a = 0; a < remaining.size(); ++a) {
      const int site = remaining[a];
      const double val = draw[static_cast<Eigen::Index>(a)] + fit.ymean;
      if (val < thresholds[site]) {
        res.y_imp[site] = val;
        Xstack.row(nstack) = Xcen_s.row(site);
        ystack[nstack] = draw[static_cast<Eigen::Index>(a)];
        ++nstack;
      } else {
        keep.push_back(site);
      }
    }
    remaining.swap(keep);
    ++epoch;
  }
  res.epochs = epoch;

  if (!remaining.empty()) {
    // stragglers: independent truncated draws from their marginal predictives
    // given the observed data and everything accepted so far
    Eigen::MatrixXd Xrem(static_cast<Eigen::Index>(remaining.size()), d);
    for (size_t a = 0; a < remaining.size(); ++a)
      Xrem.row(static_cast<Eigen::Index>(a)) = Xcen_s.row(remaining[a]);
    VecchiaPredictor pr =
        make_vecchia_predictor(fit.phi, Xstack.topRows(nstack), ystack.head(nstack), Xrem,
                               fit.cs.m, /*training_only=*/false, /*center=*/false);
    for (size_t a = 0; a < remaining.size(); ++a) {
      const int site = remaining[a];
      res.y_imp[site] =
          sample_truncated_normal(pr.mean[static_cast<Eigen::Index>(a)] + fit.ymean,
                                  pr.var[static_cast<Eigen::Index>(a)], thresholds[site], rng);
      res.fallback[static_cast<size_t>(site)] = 1;
    }
  }
  return res;
}

// --- multiple imputation ---

ImputationRun multiple_impute(const Dataset& d_obs, const Dataset& d_cens,
                              const Eigen::MatrixXd& Xstar, const ImputeOptions& opt,
                              RngStream& rng) {
  d_obs.validate();
  d_cens.validate();
  if (opt.M < 1) throw std::invalid_argument("multiple_impute: M must be at least 1");
  if (d_obs.n() < 1) throw std::invalid_argument("multiple_impute: no observed records");
  const int d = d_obs.d();
  const int nc = d_cens.n();
  if (nc > 0 && d_cens.d() != d)
    throw std::invalid_argument("multiple_impute: dimension mismatch between partitions");
  if (Xstar.rows() > 0 && Xstar.cols() != d)
    throw std::invalid_argument("multiple_impute: prediction sites have wrong dimension");

  // thresholds: the censor spec where present, else the recorded-at-limit Y
  Eigen::VectorXd thr(nc);
  for (int i = 0; i < nc; ++i) {
    thr[i] = (!d_cens.censor.empty() && std::isfinite(d_cens.censor.threshold[i]))
                 ? d_cens.censor.threshold[i]
                 : d_cens.Y[i];
  }

  // a Right-direction spec mirrors onto the canonical left-censored problem
  const bool right = !d_cens.censor.empty() && d_cens.censor.direction == CensorDirection::Right;
  const double sign = right ? -1.0 : 1.0;
  const Eigen::VectorXd yobs_w = sign * d_obs.Y;
  const Eigen::VectorXd thr_w = sign * thr;

  ImputationRun run;
  run.M = opt.M;
  run.seed = rng.seed();
  run.imputations.reserve(static_cast<size_t>(opt.M));

  if (opt.engine == ImputeEngine::Svecchia) {
    const SVecchiaFit fit = fit_svecchia(d_obs.X, yobs_w, opt.svecchia);
    const Eigen::MatrixXd Xobs_s = prescale_inputs(d_obs.X, fit.scale);
    const Eigen::MatrixXd Xstar_s = prescale_inputs(Xstar, fit.scale);
    Eigen::MatrixXd Xcen_s;
    if (nc > 0) Xcen_s = prescale_inputs(d_cens.X, fit.scale);

    for (int m = 0; m < opt.M; ++m) {
      RngStream sub = rng.substream("multiple-impute").substream(static_cast<std::uint64_t>(m));
      Imputation imp;
      VecchiaImputeResult r =
          impute_vecchia(d_obs.X, yobs_w, d_cens.X, thr_w, fit, sub, opt.epoch_cap);
      imp.y_imp = sign * r.y_imp;
      imp.fallback = std::move(r.fallback);
      imp.epochs = r.epochs;

      Eigen::MatrixXd Xaug(d_obs.n() + nc, d);
      Eigen::VectorXd yaug(d_obs.n() + nc);
      Xaug.topRows(d_obs.n()) = Xobs_s;
      yaug.head(d_obs.n()) = yobs_w.array() - fit.ymean;
      if (nc > 0) {
        Xaug.bottomRows(nc) = Xcen_s;
        yaug.tail(nc) = r.y_imp.array() - fit.ymean;
      }
      VecchiaPredictor pr = make_vecchia_predictor(fit.phi, Xaug, yaug, Xstar_s, fit.cs.m,
                                                   /*training_only=*/false, /*center=*/false);
      imp.pred.mean = sign * (pr.mean.array() + fit.ymean).matrix();
      imp.pred.var = std::move(pr.var);
      run.imputations.push_back(std::move(imp));
    }
    return run;
  }

  // Slagp engine: coordinate scales estimated once from observed data, frozen
  GlobalScales gs;
  const GlobalScales* gsp = nullptr;
  if (opt.lagp_prescale) {
    RngStream srng = RngStream(opt.lagp.seed).substream("slagp.scales");
    gs = estimate_global_lengthscales(d_obs.X, yobs_w, opt.lagp.scale_blocks,
                                      opt.lagp.scale_block_size, opt.lagp.kernel, srng);
    gsp = &gs;
  }

  for (int m = 0; m < opt.M; ++m) {
    RngStream sub = rng.substream("multiple-impute").substream(static_cast<std::uint64_t>(m));
    Imputation imp;
    LagpImputeResult r = impute_lagp(d_obs.X, yobs_w, d_cens.X, thr_w, opt.lagp, sub, gsp);
    imp.y_imp = sign * r.y_imp;
    imp.fallback = std::move(r.at_threshold);
    imp.warnings = std::move(r.warnings);

    Eigen::MatrixXd Xaug(d_obs.n() + nc, d);
    Eigen::VectorXd yaug(d_obs.n() + nc);
    Xaug.topRows(d_obs.n()) = d_obs.X;
    yaug.head(d_obs.n()) = yobs_w;
    if (nc > 0) {
      Xaug.bottomRows(nc) = d_cens.X;
      yaug.tail(nc) = r.y_imp;
    }
    LagpResult lr = gsp ? slagp_predict_batch(Xaug, yaug, Xstar, opt.lagp, gsp)
                        : lagp_predict_batch(Xaug, yaug, Xstar, opt.lagp);
    imp.pred.mean = sign * lr.pred.mean;
    imp.pred.var = std::move(lr.pred.var);
    run.imputations.push_back(std::move(imp));
  }
  return run;
}

std::pair<double, double> mixture_moments(const ImputationRun& run, int at) {
  if (run.M < 1 || run.imputations.empty())
    throw std::invalid_argument("mixture_moments: empty imputation run");
  const int M = static_cast<int>(run.imputations.size());
  double am = 0.0, av = 0.0, am2 = 0.0;
  for (const Imputation& imp : run.imputations) {
    if (at < 0 || at >= imp.pred.mean.size())
      throw std::out_of_range("mixture_moments: prediction index out of range");
    const double mu = imp.pred.mean[at];
    am += mu;
    am2 += mu * mu;
    av += imp.pred.var[at];
  }
  am /= M;
  av /= M;
  am2 /= M;
  return {am, av + am2 - am * am};
}

PredictiveDistribution mixture_predictive(const ImputationRun& run) {
  if (run.imputations.empty())
    throw std::invalid_argument("mixture_predictive: empty imputation run");
  const Eigen::Index ns = run.imputations.front().pred.mean.size();
  PredictiveDistribution out;
  out.mean.resize(ns);
  out.var.resize(ns);
  for (Eigen::Index i = 0; i < ns; ++i) {
    auto [m, v] = mixture_moments(run, static_cast<int>(i));
    out.mean[i] = m;
    out.var[i] = v;
  }
  return out;
}

// --- flat-hole collapse ---

Dataset collapse_flat_boreholes(const Dataset& d) {
  d.validate();
  if (d.hole_id.empty())
    throw std::invalid_argument("collapse_flat_boreholes: dataset has no hole ids");
  const int n = d.n();

  std::unordered_map<std::string, std::vector<int>> holes;
  for (int i = 0; i < n; ++i) holes[d.hole_id[static_cast<size_t>(i)]].push_back(i);

  std::vector<char> keep(static_cast<size_t>(n), 1);
  for (const auto& [id, rows] : holes) {
    const int k = static_cast<int>(rows.size());
    if (k <= 3) continue;
    bool flat = true;
    for (int a = 1; a < k && flat; ++a) flat = (d.Y[rows[static_cast<size_t>(a)]] == d.Y[rows[0]]);
    if (!flat) continue;

    // endpoints: the most distant pair; midway: the record nearest their
    // geometric midpoint (ties to the earlier row)
    int ea = rows[0], eb = rows[1];
    double best = -1.0;
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        const double dist =
            (d.X.row(rows[static_cast<size_t>(a)]) - d.X.row(rows[static_cast<size_t>(b)]))
                .squaredNorm();
        if (dist > best) {
          best = dist;
          ea = rows[static_cast<size_t>(a)];
          eb = rows[static_cast<size_t>(b)];
        }
      }
    }
    const Eigen::RowVectorXd mid = 0.5 * (d.X.row(ea) + d.X.row(eb));
    int em = ea;
    double bm = std::numeric_limits<double>::infinity();
    for (int a = 0; a < k; ++a) {
      const double dist = (d.X.row(rows[static_cast<size_t>(a)]) - mid).squaredNorm();
      if (dist < bm) {
        bm = dist;
        em = rows[static_cast<size_t>(a)];
      }
    }
    for (int a = 0; a < k; ++a) keep[static_cast<size_t>(rows[static_cast<size_t>(a)])] = 0;
    keep[static_cast<size_t>(ea)] = 1;
    keep[static_cast<size_t>(eb)] = 1;
    keep[static_cast<size_t>(em)] = 1;
  }

  int nk = 0;
  for (char c : keep) nk += c;
  Dataset out;
  out.X.resize(nk, d.d());
  out.Y.resize(nk);
  out.hole_id.resize(static_cast<size_t>(nk));
  out.coding = d.coding;
  const bool has_censor = !d.censor.empty();
  if (has_censor) {
    out.censor.censored.resize(static_cast<size_t>(nk));
    out.censor.threshold.resize(nk);
    out.censor.direction = d.censor.direction;
  }
  int w = 0;
  for (int i = 0; i < n; ++i) {
    if (!keep[static_cast<size_t>(i)]) continue;
    out.X.row(w) = d.X.row(i);
    out.Y[w] = d.Y[i];
    out.hole_id[static_cast<size_t>(w)] = d.hole_id[static_cast<size_t>(i)];
    if (has_censor) {
      out.censor.censored[static_cast<size_t>(w)] = d.censor.censored[static_cast<size_t>(i)];
      out.censor.threshold[w] = d.censor.threshold[i];
    }
    ++w;
  }
  out.validate();
  return out;
}

}  // namespace minegp
