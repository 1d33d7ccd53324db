#include "minegp/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "minegp/rng.hpp"
#include "minegp/spatial.hpp"
#include "minegp/stats.hpp"

namespace minegp {

namespace {

void check_same_size(const char* who, Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s: size mismatch (%lld vs %lld)", who, (long long)a,
                  (long long)b);
    throw std::invalid_argument(buf);
  }
}

}  // namespace

double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& mu) {
  check_same_size("rmse", y_true.size(), mu.size());
  if (y_true.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((y_true - mu).squaredNorm() / (double)y_true.size());
}

double score_full(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& Sigma) {
  check_same_size("score_full", y.size(), mu.size());
  check_same_size("score_full", y.size(), Sigma.rows());
  check_same_size("score_full", Sigma.rows(), Sigma.cols());
  if (y.size() == 0) throw std::invalid_argument("score_full: empty input");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("score_full: covariance is not positive definite");
  double logdet = 0.0;
  const Eigen::MatrixXd& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd r = y - mu;
  return -logdet - r.dot(llt.solve(r));
}

double score_pointwise(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                       const Eigen::VectorXd& var) {
  check_same_size("score_pointwise", y.size(), mu.size());
  check_same_size("score_pointwise", y.size(), var.size());
  if (y.size() == 0) throw std::invalid_argument("score_pointwise: empty input");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(var[i] > 0.0)) throw std::invalid_argument("score_pointwise: nonpositive variance");
    const double r = y[i] - mu[i];
    acc -= std::log(var[i]) + r * r / var[i];
  }
  return acc;
}

double log_loss_censored(const Eigen::VectorXd& thresholds, const Eigen::VectorXd& mu,
                         const Eigen::VectorXd& var) {
  check_same_size("log_loss_censored", thresholds.size(), mu.size());
  check_same_size("log_loss_censored", thresholds.size(), var.size());
  if (thresholds.size() == 0) throw std::invalid_argument("log_loss_censored: empty input");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < thresholds.size(); ++i) {
    if (!(var[i] > 0.0)) throw std::invalid_argument("log_loss_censored: nonpositive variance");
    // log Phi keeps far-tail sites finite where Phi itself underflows
    acc += norm_cdf_log((thresholds[i] - mu[i]) / std::sqrt(var[i]));
  }
  return -acc / (double)thresholds.size();
}

FoldAssignment borehole_folds(const std::vector<std::string>& hole_ids, int K, RngStream& rng) {
  if (K < 1) throw std::invalid_argument("borehole_folds: K must be positive");
  if (hole_ids.empty()) throw std::invalid_argument("borehole_folds: no records");

  // distinct holes in first-appearance order, with their record counts
  std::vector<std::string> holes;
  std::unordered_map<std::string, int> count;
  for (const std::string& h : hole_ids) {
    auto [it, fresh] = count.try_emplace(h, 0);
    if (fresh) holes.push_back(h);
    ++it->second;
  }
  if ((int)holes.size() < K) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "borehole_folds: %d fold(s) requested but only %d distinct hole(s)",
                  K, (int)holes.size());
    throw std::invalid_argument(buf);
  }

  rng.shuffle(holes);

  FoldAssignment fa;
  fa.K = K;
  std::vector<long long> load((std::size_t)K, 0);
  for (const std::string& h : holes) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (load[k] < load[best]) best = k;
    fa.fold_of_hole.emplace(h, best);
    load[best] += count[h];
  }
  fa.fold_of_record.resize(hole_ids.size());
  for (std::size_t i = 0; i < hole_ids.size(); ++i)
    fa.fold_of_record[i] = fa.fold_of_hole.at(hole_ids[i]);
  return fa;
}

GPFit subset_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, int m, RngStream& rng,
                const GpOptions& opt) {
  const int n = (int)X.rows();
  check_same_size("subset_gp", X.rows(), Y.size());
  if (n == 0) throw std::invalid_argument("subset_gp: empty training set");
  m = std::clamp(m, 1, n);
  std::vector<int> idx = rng.sample_without_replacement(n, m);
  std::sort(idx.begin(), idx.end());  // m = n then reproduces the full fit verbatim
  Eigen::MatrixXd Xs(m, X.cols());
  Eigen::VectorXd Ys(m);
  for (int k = 0; k < m; ++k) {
    Xs.row(k) = X.row(idx[k]);
    Ys[k] = Y[idx[k]];
  }
  return fit_mle(Xs, Ys, opt);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

MetricsRecord run_holdout(const Dataset& train, const Dataset& test, const CvConfig& cfg,
                          RngStream& rng) {
  train.validate();
  test.validate();
  if (train.n() == 0 || test.n() == 0)
    throw std::invalid_argument("run_holdout: empty train or test set");
  if (train.d() != test.d()) throw std::invalid_argument("run_holdout: dimension mismatch");

  const int nt = test.n();
  const bool want_f = nt <= cfg.score_f_limit;

  MetricsRecord rec;
  Eigen::VectorXd mean, var;
  std::optional<Eigen::MatrixXd> fcov;  // joint test covariance, when the model gives one
  Eigen::VectorXd fmean;                // the mean paired with fcov
  std::vector<int> err((std::size_t)nt, 0);

  const auto t0 = Clock::now();
  switch (cfg.model) {
    case CvModel::GpSubset: {
      GPFit fit = subset_gp(train.X, train.Y, cfg.subset_m, rng, cfg.gp);
      rec.fit_seconds = seconds_since(t0);
      const auto t1 = Clock::now();
      PredictiveDistribution pred = gp_predict(fit, test.X, want_f, true);
      rec.predict_seconds = seconds_since(t1);
      mean = std::move(pred.mean);
      var = std::move(pred.var);
      if (pred.cov) {
        fcov = std::move(pred.cov);
        fmean = mean;
      }
      break;
    }
    case CvModel::Lagp:
    case CvModel::Slagp: {
      // transductive: per-site work happens at prediction time, so only the
      // pre-scaled variant's global lengthscale pass counts as fitting
      GlobalScales gs;
      const GlobalScales* gsp = nullptr;
      if (cfg.model == CvModel::Slagp) {
        RngStream srng = RngStream(cfg.lagp.seed).substream("slagp.scales");
        gs = estimate_global_lengthscales(train.X, train.Y, cfg.lagp.scale_blocks,
                                          cfg.lagp.scale_block_size, cfg.lagp.kernel, srng);
        gsp = &gs;
      }
      rec.fit_seconds = seconds_since(t0);
      const auto t1 = Clock::now();
      LagpResult res = cfg.model == CvModel::Slagp
                           ? slagp_predict_batch(train.X, train.Y, test.X, cfg.lagp, gsp)
                           : lagp_predict_batch(train.X, train.Y, test.X, cfg.lagp);
      rec.predict_seconds = seconds_since(t1);
      mean = std::move(res.pred.mean);
      var = std::move(res.pred.var);
      for (int i = 0; i < nt; ++i) err[i] = res.fits[i].error_code;
      break;
    }
    case CvModel::Svecchia: {
      SVecchiaFit fit = fit_svecchia(train.X, train.Y, cfg.svecchia);
      rec.fit_seconds = seconds_since(t0);
      const auto t1 = Clock::now();
      PredictiveDistribution pred = svecchia_predict(fit, test.X, want_f);
      rec.predict_seconds = seconds_since(t1);
      mean = std::move(pred.mean);
      var = std::move(pred.var);
      if (pred.cov) {
        fcov = std::move(pred.cov);
        fmean = mean;
      }
      break;
    }
    case CvModel::Ok: {
      double bw = cfg.ok_bin_width, hm = cfg.ok_h_max;
      if (bw <= 0.0 || hm <= 0.0) {
        const Eigen::VectorXd lo = train.X.colwise().minCoeff();
        const Eigen::VectorXd hi = train.X.colwise().maxCoeff();
        const double diag = (hi - lo).norm();
        if (bw <= 0.0) bw = diag / 30.0;
        if (hm <= 0.0) hm = diag / 2.0;
      }
      EmpiricalVariogram ev = empirical_semivariogram(train.X, train.Y, bw, hm);
      NlsFit nf = fit_nls(ev, cfg.ok_proto, cfg.ok_nls);
      rec.fit_seconds = seconds_since(t0);
      const auto t1 = Clock::now();
      OkPrediction ok = ok_predict(nf.model, train.X, train.Y, test.X, cfg.ok);
      mean = std::move(ok.mean);
      var = std::move(ok.var);
      err = std::move(ok.error_code);
      // the joint score of a fitted variogram is the score of the global GP it
      // implies; the dense conditioning caps both set sizes
      if (want_f && train.n() <= cfg.score_f_limit) {
        GPFit g = gp_condition(vgram_to_kernel(nf.model), train.X, train.Y, true);
        PredictiveDistribution pred = gp_predict(g, test.X, true, true);
        fmean = std::move(pred.mean);
        fcov = std::move(pred.cov);
      }
      rec.predict_seconds = seconds_since(t1);
      break;
    }
  }

  // error-coded or non-finite sites drop out of the pointwise metrics
  std::vector<int> keep;
  keep.reserve((std::size_t)nt);
  for (int i = 0; i < nt; ++i)
    if (err[i] == 0 && std::isfinite(mean[i]) && std::isfinite(var[i]) && var[i] > 0.0)
      keep.push_back(i);
  rec.n_errors = nt - (int)keep.size();

  if (!keep.empty()) {
    const int nv = (int)keep.size();
    Eigen::VectorXd yv(nv), mv(nv), vv(nv);
    for (int k = 0; k < nv; ++k) {
      yv[k] = test.Y[keep[k]];
      mv[k] = mean[keep[k]];
      vv[k] = var[keep[k]];
    }
    rec.rmse = rmse(yv, mv);
    rec.score_p = score_pointwise(yv, mv, vv);
  }

  if (fcov) {
    try {
      rec.score_f = score_full(test.Y, fmean, *fcov);
    } catch (const std::exception&) {
      // a non-PD joint covariance leaves the full score unreported
    }
  }

  if (!test.censor.empty() && test.censor.n_censored() > 0) {
    std::vector<int> cs;
    for (int i : keep)
      if (test.censor.censored[i]) cs.push_back(i);
    if (!cs.empty()) {
      // right-censoring scores the exceedance probability; the mirrored
      // arguments hand both cases to the one-sided rule
      const double sign = test.censor.direction == CensorDirection::Right ? -1.0 : 1.0;
      const int nc = (int)cs.size();
      Eigen::VectorXd th(nc), mv(nc), vv(nc);
      for (int k = 0; k < nc; ++k) {
        th[k] = sign * test.censor.threshold[cs[k]];
        mv[k] = sign * mean[cs[k]];
        vv[k] = var[cs[k]];
      }
      rec.log_loss = log_loss_censored(th, mv, vv);
    }
  }

  return rec;
}

CvResult run_cv(const Dataset& d, int K, const CvConfig& cfg) {
  d.validate();
  if (K < 2)
    throw std::invalid_argument("run_cv: need at least 2 folds (a single split is run_holdout)");

  // without hole structure every record is its own unit
  std::vector<std::string> singleton;
  const std::vector<std::string>* ids = &d.hole_id;
  if (d.hole_id.empty()) {
    singleton.resize((std::size_t)d.n());
    for (int i = 0; i < d.n(); ++i) singleton[i] = "#" + std::to_string(i);
    ids = &singleton;
  }

  CvResult out;
  {
    // fold assignment depends only on the seed and the hole ids, so different
    // models evaluated under one seed see identical splits
    RngStream frng = RngStream(cfg.seed).substream("cv.folds");
    out.folds = borehole_folds(*ids, K, frng);
  }

  for (int k = 0; k < K; ++k) {
    std::vector<int> tr, te;
    for (int i = 0; i < d.n(); ++i)
      (out.folds.fold_of_record[i] == k ? te : tr).push_back(i);
    Dataset dtr = select_rows(d, tr);
    Dataset dte = select_rows(d, te);
    RngStream rng = RngStream(cfg.seed).substream("cv.run").substream((std::uint64_t)k);
    out.per_fold.push_back(run_holdout(dtr, dte, cfg, rng));
  }

  // summary: means of the quality metrics, sums of error counts and wall time
  auto mean_of = [](const std::vector<double>& v) {
    double acc = 0.0;
    int n = 0;
    for (double x : v)
      if (std::isfinite(x)) {
        acc += x;
        ++n;
      }
    return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<double> vr, vp, vf, vl;
  MetricsRecord& s = out.summary;
  for (const MetricsRecord& r : out.per_fold) {
    vr.push_back(r.rmse);
    vp.push_back(r.score_p);
    if (r.score_f) vf.push_back(*r.score_f);
    if (r.log_loss) vl.push_back(*r.log_loss);
    s.fit_seconds += r.fit_seconds;
    s.predict_seconds += r.predict_seconds;
    s.n_errors += r.n_errors;
  }
  s.rmse = mean_of(vr);
  s.score_p = mean_of(vp);
  if (!vf.empty()) s.score_f = mean_of(vf);
  if (!vl.empty()) s.log_loss = mean_of(vl);
  return out;
}

namespace {

// json number: NaN and infinities have no representation, so they print null
std::string json_num(double v) { return std::isfinite(v) ? fmt_g17(v) : "null"; }

std::string json_num(const std::optional<double>& v) {
  return v ? json_num(*v) : std::string("null");
}

// the fields of one record, one per line at the given indentation
void record_json_fields(std::string& out, const MetricsRecord& r, const std::string& pad,
                        bool timing) {
  out += pad + "\"rmse\": " + json_num(r.rmse) + ",\n";
  out += pad + "\"score_f\": " + json_num(r.score_f) + ",\n";
  out += pad + "\"score_p\": " + json_num(r.score_p) + ",\n";
  out += pad + "\"log_loss\": " + json_num(r.log_loss) + ",\n";
  if (timing) {
    out += pad + "\"fit_seconds\": " + json_num(r.fit_seconds) + ",\n";
    out += pad + "\"predict_seconds\": " + json_num(r.predict_seconds) + ",\n";
  }
  out += pad + "\"n_errors\": " + std::to_string(r.n_errors) + "\n";
}

void result_json_body(std::string& out, const CvResult& r, const std::string& pad, bool timing) {
  out += pad + "\"folds\": [\n";
  for (std::size_t k = 0; k < r.per_fold.size(); ++k) {
    out += pad + "  {\n";
    out += pad + "    \"fold\": " + std::to_string(k) + ",\n";
    record_json_fields(out, r.per_fold[k], pad + "    ", timing);
    out += pad + (k + 1 < r.per_fold.size() ? "  },\n" : "  }\n");
  }
  out += pad + "],\n";
  out += pad + "\"summary\": {\n";
  record_json_fields(out, r.summary, pad + "  ", timing);
  out += pad + "}";
}

void csv_cell(std::string& out, double v) {
  if (std::isfinite(v)) out += fmt_g17(v);
}

void csv_cell(std::string& out, const std::optional<double>& v) {
  if (v) csv_cell(out, *v);
}

void record_csv_cells(std::string& out, const MetricsRecord& m, bool timing) {
  csv_cell(out, m.rmse);
  out += ',';
  csv_cell(out, m.score_f);
  out += ',';
  csv_cell(out, m.score_p);
  out += ',';
  csv_cell(out, m.log_loss);
  out += ',';
  if (timing) {
    csv_cell(out, m.fit_seconds);
    out += ',';
    csv_cell(out, m.predict_seconds);
    out += ',';
  }
  out += std::to_string(m.n_errors);
  out += '\n';
}

const char* csv_metric_header(bool timing) {
  return timing ? "rmse,score_f,score_p,log_loss,fit_seconds,predict_seconds,n_errors"
                : "rmse,score_f,score_p,log_loss,n_errors";
}

}  // namespace

std::string cv_metrics_json(const CvResult& r, bool include_timing) {
  std::string out = "{\n";
  out += "  \"n_folds\": " + std::to_string(r.folds.K) + ",\n";
  result_json_body(out, r, "  ", include_timing);
  out += "\n}\n";
  return out;
}

std::string cv_metrics_csv(const CvResult& r, bool include_timing) {
  std::string out = std::string("fold,") + csv_metric_header(include_timing) + "\n";
  for (std::size_t k = 0; k < r.per_fold.size(); ++k) {
    out += std::to_string(k);
    out += ',';
    record_csv_cells(out, r.per_fold[k], include_timing);
  }
  out += "summary,";
  record_csv_cells(out, r.summary, include_timing);
  return out;
}

std::string cv_metrics_json(const std::vector<NamedCv>& runs, int K, std::uint64_t seed,
                            const std::string& fingerprint, bool include_timing) {
  std::string out = "{\n";
  out += "  \"k\": " + std::to_string(K) + ",\n";
  out += "  \"seed\": " + std::to_string(seed) + ",\n";
  if (!fingerprint.empty()) out += "  \"fingerprint\": \"" + fingerprint + "\",\n";
  out += "  \"models\": {\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out += "    \"" + runs[i].model + "\": {\n";
    result_json_body(out, runs[i].result, "      ", include_timing);
    out += i + 1 < runs.size() ? "\n    },\n" : "\n    }\n";
  }
  out += "  }\n}\n";
  return out;
}

std::string cv_metrics_csv(const std::vector<NamedCv>& runs, bool include_timing) {
  std::string out = std::string("model,fold,") + csv_metric_header(include_timing) + "\n";
  for (const NamedCv& run : runs) {
    for (std::size_t k = 0; k < run.result.per_fold.size(); ++k) {
      out += run.model;
      out += ',';
      out += std::to_string(k);
      out += ',';
      record_csv_cells(out, run.result.per_fold[k], include_timing);
    }
    out += run.model;
    out += ",summary,";
    record_csv_cells(out, run.result.summary, include_timing);
  }
  return out;
}

}  // namespace minegp
