#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "minegp/censoring.hpp"
#include "minegp/dataset.hpp"
#include "minegp/evaluation.hpp"
#include "minegp/gp.hpp"
#include "minegp/lagp.hpp"
#include "minegp/rng.hpp"
#include "minegp/spatial.hpp"
#include "minegp/variogram.hpp"
#include "minegp/vecchia.hpp"

using namespace minegp;

namespace {

// ---------------------------------------------------------------- utilities

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

bool parse_cell(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  *out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

// ------------------------------------------------------------ input schemas

struct SchemaFlags {
  std::string hole = "auto";
  std::string coords = "auto";
  std::string value = "value";
  std::string censored = "censored";
  std::string limit = "detection_limit";
};

void add_schema_flags(CLI::App* cmd, SchemaFlags& f) {
  cmd->add_option("--col-hole", f.hole,
                  "hole-id column name; 'auto' uses hole_id when present, '' disables")
      ->capture_default_str();
  cmd->add_option("--coords", f.coords,
                  "comma-separated coordinate columns; 'auto' detects x[,y[,z]] or x1..xd")
      ->capture_default_str();
  cmd->add_option("--col-value", f.value, "response column name")->capture_default_str();
  cmd->add_option("--col-censored", f.censored, "0/1 censor-flag column name")
      ->capture_default_str();
  cmd->add_option("--col-limit", f.limit, "detection-limit column name")->capture_default_str();
}

std::vector<std::string> read_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return split_commas(line);
}

std::vector<std::string> detect_coords(const std::vector<std::string>& header,
                                       const std::string& path) {
  const std::unordered_set<std::string> have(header.begin(), header.end());
  std::vector<std::string> out;
  if (have.count("x1")) {
    for (int k = 1; have.count("x" + std::to_string(k)); ++k)
      out.push_back("x" + std::to_string(k));
    return out;
  }
  if (have.count("x")) {
    out.push_back("x");
    if (have.count("y")) {
      out.push_back("y");
      if (have.count("z")) out.push_back("z");
    }
    return out;
  }
  throw std::runtime_error(path +
                           ": cannot auto-detect coordinate columns (expected x[,y[,z]] or "
                           "x1..xd); pass --coords explicitly");
}

CsvSchema resolve_schema(const SchemaFlags& f, const std::string& path) {
  const std::vector<std::string> header = read_header(path);
  CsvSchema s;
  if (f.coords == "auto")
    s.coords = detect_coords(header, path);
  else
    s.coords = split_commas(f.coords);
  if (f.hole == "auto")
    s.hole_id = std::count(header.begin(), header.end(), "hole_id") ? "hole_id" : "";
  else
    s.hole_id = f.hole;
  s.value = f.value;
  s.censored = f.censored;
  s.detection_limit = f.limit;
  return s;
}

// prediction sites: named coordinate columns only, anything else is ignored
struct Sites {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
};

Sites load_sites_csv(const std::string& path, const std::string& coords_flag) {
  const std::vector<std::string> header = read_header(path);
  Sites out;
  out.names = coords_flag == "auto" ? detect_coords(header, path) : split_commas(coords_flag);

  std::vector<int> ccol;
  for (const std::string& name : out.names) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error(path + ": missing coordinate column " + name);
    ccol.push_back((int)(it - header.begin()));
  }

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> vals;
  int lineno = 1, rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t,") == std::string::npos) continue;
    const std::vector<std::string> f = split_commas(line);
    if (f.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(f.size()));
    for (std::size_t j = 0; j < ccol.size(); ++j) {
      double v;
      if (!parse_cell(f[(std::size_t)ccol[j]], &v))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": column " +
                                 out.names[j] + ": non-numeric value '" +
                                 f[(std::size_t)ccol[j]] + "'");
      vals.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(path + ": no prediction sites");
  const int d = (int)out.names.size();
  out.X.resize(rows, d);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < d; ++j) out.X(i, j) = vals[(std::size_t)(i * d + j)];
  return out;
}

// apply a stored coding record (the fit's view of the world) to raw data,
// mirroring the transform order used when the coding was first derived
Dataset apply_coding(const Dataset& raw, const Coding& coding) {
  Dataset out = raw;
  out.coding = coding;
  out.X = code_points(coding, raw.X);
  out.Y = code_response(coding, raw.Y);
  if (!out.censor.empty()) {
    for (int i = 0; i < out.n(); ++i) {
      if (!out.censor.censored[(std::size_t)i]) continue;
      Eigen::VectorXd t(1);
      t[0] = raw.censor.threshold[i];
      out.censor.threshold[i] = code_response(coding, t)[0];
    }
  }
  return out;
}

// ------------------------------------------------------------ shared config

// One bag of defaults shared by every subcommand, mirroring the library's
// conventions: ALC neighborhoods of 50, conditioning sets of 25, five
// imputations, ten folds. Validated before any computation runs.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = library default; 1 = serial reference path

  std::string kernel = "matern";
  double nu = 2.5;
  double p = 2.0;
  bool isotropic = false;
  double g_init = 0.1;

  int lagp_m = 50;
  int svecchia_m = 25;
  int svecchia_rounds = 3;
  int subset_m = 2000;
  int imputations = 5;
  int k_folds = 10;
  int epoch_cap = 100;
  int ok_m = 50;
  int score_f_limit = 2500;

  bool log_response = false;

  void validate() const {
    if (kernel != "matern" && kernel != "powerexp")
      throw std::invalid_argument("--kernel must be matern or powerexp");
    if (kernel == "matern" && nu != 1.5 && nu != 2.5)
      throw std::invalid_argument("--nu must be 1.5 or 2.5");
    if (kernel == "powerexp" && !(p > 0.0 && p <= 2.0))
      throw std::invalid_argument("--p must lie in (0, 2]");
    if (!(g_init > 0.0)) throw std::invalid_argument("--g-init must be positive");
    if (lagp_m < 1 || svecchia_m < 1 || subset_m < 1 || ok_m < 1)
      throw std::invalid_argument("model neighborhood sizes must be positive");
    if (svecchia_rounds < 1) throw std::invalid_argument("--rounds must be positive");
    if (imputations < 1) throw std::invalid_argument("--imputations must be positive");
    if (k_folds < 2) throw std::invalid_argument("--k must be at least 2");
    if (epoch_cap < 1) throw std::invalid_argument("--epoch-cap must be positive");
    if (threads < 0) throw std::invalid_argument("--threads cannot be negative");
    if (score_f_limit < 0) throw std::invalid_argument("--score-f-limit cannot be negative");
  }
};

KernelFamily family_from(const std::string& s) {
  if (s == "matern") return KernelFamily::Matern;
  if (s == "powerexp") return KernelFamily::PowerExp;
  throw std::invalid_argument("unknown kernel family '" + s + "'");
}

Kernel proto_kernel(const RunConfig& rc, bool ard) {
  Kernel k;
  k.family = family_from(rc.kernel);
  k.p = rc.p;
  k.nu = rc.nu;
  if (ard && !rc.isotropic)
    k.theta.resize(0);  // per-coordinate lengthscales, automatic init
  else
    k.theta = Eigen::VectorXd::Constant(1, -1.0);  // shared lengthscale, automatic init
  return k;
}

// ------------------------------------------------------------ fit documents

struct FitDoc {
  std::string model;  // "gp" | "svecchia"
  int n = 0, d = 0;
  std::string fingerprint;
  Coding coding;
  Hyperparams phi;
  double ymean = 0.0;
  double loglik = 0.0;
  bool converged = false;
  // svecchia only
  int m = 0;
  Eigen::VectorXd scale;
  int rounds = 0;
};

std::string family_name(KernelFamily f) {
  return f == KernelFamily::Matern ? "matern" : "powerexp";
}

std::string json_vector(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_g17(v[i]);
  }
  return out + "]";
}

std::string fit_to_json(const FitDoc& f) {
  std::string out = "{\n";
  out += "  \"format\": \"minegp-fit\",\n";
  out += "  \"version\": 1,\n";
  out += "  \"model\": \"" + f.model + "\",\n";
  out += "  \"n\": " + std::to_string(f.n) + ",\n";
  out += "  \"d\": " + std::to_string(f.d) + ",\n";
  out += "  \"fingerprint\": \"" + f.fingerprint + "\",\n";
  out += "  \"coding\": {\n";
  out += std::string("    \"log_response\": ") + (f.coding.log_response ? "true" : "false") +
         ",\n";
  out += "    \"y_center\": " + fmt_g17(f.coding.y_center) + ",\n";
  out += "    \"columns\": [\n";
  for (std::size_t j = 0; j < f.coding.columns.size(); ++j) {
    out += "      {\"offset\": " + fmt_g17(f.coding.columns[j].offset) +
           ", \"scale\": " + fmt_g17(f.coding.columns[j].scale) + "}";
    out += j + 1 < f.coding.columns.size() ? ",\n" : "\n";
  }
  out += "    ]\n";
  out += "  },\n";
  out += "  \"kernel\": {\n";
  out += "    \"family\": \"" + family_name(f.phi.kernel.family) + "\",\n";
  out += "    \"p\": " + fmt_g17(f.phi.kernel.p) + ",\n";
  out += "    \"nu\": " + fmt_g17(f.phi.kernel.nu) + ",\n";
  out += "    \"theta\": " + json_vector(f.phi.kernel.theta) + "\n";
  out += "  },\n";
  out += "  \"tau2\": " + fmt_g17(f.phi.tau2) + ",\n";
  out += "  \"g\": " + fmt_g17(f.phi.g) + ",\n";
  out += "  \"ymean\": " + fmt_g17(f.ymean) + ",\n";
  out += "  \"loglik\": " + fmt_g17(f.loglik) + ",\n";
  out += std::string("  \"converged\": ") + (f.converged ? "true" : "false");
  if (f.model == "svecchia") {
    out += ",\n  \"svecchia\": {\n";
    out += "    \"m\": " + std::to_string(f.m) + ",\n";
    out += "    \"rounds\": " + std::to_string(f.rounds) + ",\n";
    out += "    \"scale\": " + json_vector(f.scale) + "\n";
    out += "  }";
  }
  out += "\n}\n";
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v((Eigen::Index)a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[(Eigen::Index)i] = a[i].get<double>();
  return v;
}

FitDoc fit_from_json(const std::string& text, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": not a valid fit file (" + e.what() + ")");
  }
  try {
    if (j.at("format").get<std::string>() != "minegp-fit")
      throw std::runtime_error("format field is not minegp-fit");
    if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported version");
    FitDoc f;
    f.model = j.at("model").get<std::string>();
    if (f.model != "gp" && f.model != "svecchia")
      throw std::runtime_error("unknown model '" + f.model + "'");
    f.n = j.at("n").get<int>();
    f.d = j.at("d").get<int>();
    f.fingerprint = j.at("fingerprint").get<std::string>();
    const nlohmann::json& c = j.at("coding");
    f.coding.log_response = c.at("log_response").get<bool>();
    f.coding.y_center = c.at("y_center").get<double>();
    for (const nlohmann::json& col : c.at("columns")) {
      ColumnCoding cc;
      cc.offset = col.at("offset").get<double>();
      cc.scale = col.at("scale").get<double>();
      f.coding.columns.push_back(cc);
    }
    const nlohmann::json& k = j.at("kernel");
    f.phi.kernel.family = family_from(k.at("family").get<std::string>());
    f.phi.kernel.p = k.at("p").get<double>();
    f.phi.kernel.nu = k.at("nu").get<double>();
    f.phi.kernel.theta = vector_from_json(k.at("theta"));
    f.phi.tau2 = j.at("tau2").get<double>();
    f.phi.g = j.at("g").get<double>();
    f.ymean = j.at("ymean").get<double>();
    f.loglik = j.at("loglik").get<double>();
    f.converged = j.at("converged").get<bool>();
    if (f.model == "svecchia") {
      const nlohmann::json& s = j.at("svecchia");
      f.m = s.at("m").get<int>();
      f.rounds = s.at("rounds").get<int>();
      f.scale = vector_from_json(s.at("scale"));
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed fit file (" + e.what() + ")");
  }
}

// ------------------------------------------------------------- subcommands

struct SynthArgs {
  std::string out, kind;
  int n = 20;
  double noise = 0.1;
  double offset = 2.0;
  std::optional<double> threshold;
  int holes = 50, per_hole = 20;
  std::string domain = "1000,1000,400";
  double censor_frac = 0.0;
  double truth_theta = -1.0;
  double truth_tau2 = 1.0;
  double truth_g = 0.05;
  double truth_nu = 2.5;
  int draw_m = 20;
};

int run_synth(const RunConfig& rc, const SynthArgs& a) {
  RngStream rng = RngStream(rc.seed).substream("synth");
  Dataset ds;
  if (a.kind == "toy1d") {
    const Synthetic1d s = gen_synthetic_1d(a.n, a.noise, a.threshold, rng, a.offset);
    ds = s.data;
  } else {
    const std::vector<std::string> parts = split_commas(a.domain);
    if (parts.size() != 3) throw std::invalid_argument("--domain needs three comma-separated extents");
    Eigen::VectorXd dom(3);
    for (int j = 0; j < 3; ++j)
      if (!parse_cell(parts[(std::size_t)j], &dom[j]))
        throw std::invalid_argument("--domain: non-numeric extent '" + parts[(std::size_t)j] + "'");
    const double th = a.truth_theta > 0.0 ? a.truth_theta : std::pow(0.1 * dom.norm(), 2);
    Hyperparams phi;
    phi.kernel = family_from(rc.kernel) == KernelFamily::Matern
                     ? Kernel::matern(a.truth_nu, th)
                     : Kernel::powerexp(rc.p, th);
    phi.tau2 = a.truth_tau2;
    phi.g = a.truth_g;
    ds = gen_synthetic_boreholes(a.holes, a.per_hole, dom, phi, a.censor_frac, rng, a.draw_m);
  }
  save_assay_csv(ds, a.out);
  std::printf("synth: wrote %d records (d=%d, %d censored) to %s\n", ds.n(), ds.d(),
              ds.censor.empty() ? 0 : ds.censor.n_censored(), a.out.c_str());
  return 0;
}

struct FitArgs {
  std::string data, out, model = "gp";
  SchemaFlags schema;
};

int run_fit(const RunConfig& rc, const FitArgs& a) {
  const Dataset raw = load_assay_csv(a.data, resolve_schema(a.schema, a.data));
  const Dataset coded = code_dataset(raw, rc.log_response);

  FitDoc doc;
  doc.model = a.model;
  doc.n = coded.n();
  doc.d = coded.d();
  doc.fingerprint = dataset_fingerprint(coded);
  doc.coding = coded.coding;

  if (a.model == "gp") {
    GpOptions opt;
    opt.kernel = proto_kernel(rc, true);
    opt.g_init = rc.g_init;
    const GPFit fit = fit_mle(coded.X, coded.Y, opt);
    doc.phi = fit.phi;
    doc.ymean = fit.ymean;
    doc.loglik = fit.loglik;
    doc.converged = fit.converged;
  } else {
    SVecchiaOptions opt;
    opt.kernel = proto_kernel(rc, false);
    opt.m = rc.svecchia_m;
    opt.max_rounds = rc.svecchia_rounds;
    opt.g_init = rc.g_init;
    const SVecchiaFit fit = fit_svecchia(coded.X, coded.Y, opt);
    doc.phi = fit.phi;
    doc.ymean = fit.ymean;
    doc.loglik = fit.loglik;
    doc.converged = fit.converged;
    doc.m = opt.m;
    doc.scale = fit.scale;
    doc.rounds = fit.rounds;
  }

  write_text_file(a.out, fit_to_json(doc));
  std::printf("fit: model=%s n=%d d=%d loglik=%s converged=%s -> %s\n", doc.model.c_str(), doc.n,
              doc.d, fmt_g17(doc.loglik).c_str(), doc.converged ? "yes" : "no", a.out.c_str());
  return 0;
}

struct PredictArgs {
  std::string fit, data, sites, out;
  std::string sites_coords = "auto";
  bool force = false;
  SchemaFlags schema;
};

int run_predict(const RunConfig&, const PredictArgs& a) {
  const FitDoc doc = fit_from_json(slurp(a.fit), a.fit);
  const Dataset raw = load_assay_csv(a.data, resolve_schema(a.schema, a.data));
  if (raw.d() != doc.d)
    throw std::runtime_error("training data has d=" + std::to_string(raw.d()) +
                             " but the fit was built with d=" + std::to_string(doc.d));
  if ((int)doc.coding.columns.size() != doc.d)
    throw std::runtime_error(a.fit + ": coding record does not cover every coordinate");

  const Dataset coded = apply_coding(raw, doc.coding);
  const std::string fp = dataset_fingerprint(coded);
  if (fp != doc.fingerprint) {
    if (!a.force)
      throw std::runtime_error("training data fingerprint " + fp +
                               " does not match the fit's " + doc.fingerprint +
                               "; pass --force to predict against it anyway");
    std::fprintf(stderr, "warning: fingerprint mismatch (%s vs %s) overridden by --force\n",
                 fp.c_str(), doc.fingerprint.c_str());
  }

  const Sites sites = load_sites_csv(a.sites, a.sites_coords);
  if ((int)sites.X.cols() != doc.d)
    throw std::runtime_error(a.sites + ": sites have d=" + std::to_string(sites.X.cols()) +
                             " but the fit expects d=" + std::to_string(doc.d));
  const Eigen::MatrixXd Xs = code_points(doc.coding, sites.X);

  Eigen::VectorXd mean, var;
  if (doc.model == "gp") {
    const GPFit fit = gp_condition(doc.phi, coded.X, coded.Y, true);
    const PredictiveDistribution p = gp_predict(fit, Xs, false, true);
    mean = p.mean;
    var = p.var;
  } else {
    // the stored hyperparameters live in the scaled coordinates; rebuild that
    // space and condition without re-centering (the fit's mean is recorded)
    const Eigen::MatrixXd Xtr = prescale_inputs(coded.X, doc.scale);
    const Eigen::MatrixXd Xss = prescale_inputs(Xs, doc.scale);
    const Eigen::VectorXd yc = coded.Y.array() - doc.ymean;
    const VecchiaPredictor pr = make_vecchia_predictor(doc.phi, Xtr, yc, Xss, doc.m, false, false);
    mean = pr.mean.array() + doc.ymean;
    var = pr.var;
  }

  std::string out = join(sites.names, ',') + ",mean,var,mean_decoded\n";
  const Eigen::VectorXd decoded = decode_response(doc.coding, mean);
  for (int i = 0; i < (int)sites.X.rows(); ++i) {
    for (int j = 0; j < doc.d; ++j) {
      if (j) out += ',';
      out += fmt_g17(sites.X(i, j));
    }
    out += ',' + fmt_g17(mean[i]) + ',' + fmt_g17(var[i]) + ',' + fmt_g17(decoded[i]) + '\n';
  }
  write_text_file(a.out, out);
  std::printf("predict: %d sites -> %s\n", (int)sites.X.rows(), a.out.c_str());
  return 0;
}

struct VariogramArgs {
  std::string data, out_empirical, out_model;
  double bin_width = -1.0, h_max = -1.0, h_max_fit = -1.0;
  std::string weights = "equal";
  double nugget_lo = 1e-4;
  SchemaFlags schema;
};

int run_variogram(const RunConfig& rc, const VariogramArgs& a) {
  const Dataset raw = load_assay_csv(a.data, resolve_schema(a.schema, a.data));
  const Dataset coded = code_dataset(raw, rc.log_response);

  double bw = a.bin_width, hm = a.h_max;
  if (bw <= 0.0 || hm <= 0.0) {
    const Eigen::VectorXd lo = coded.X.colwise().minCoeff();
    const Eigen::VectorXd hi = coded.X.colwise().maxCoeff();
    const double diag = (hi - lo).norm();
    if (bw <= 0.0) bw = diag / 30.0;
    if (hm <= 0.0) hm = diag / 2.0;
  }
  const EmpiricalVariogram ev = empirical_semivariogram(coded.X, coded.Y, bw, hm);

  VariogramModel proto;
  proto.family = family_from(rc.kernel);
  proto.p = rc.p;
  proto.nu = rc.nu;
  NlsOptions no;
  if (a.weights == "paircount")
    no.weights = NlsWeights::PairCount;
  else if (a.weights != "equal")
    throw std::invalid_argument("--weights must be equal or paircount");
  if (a.h_max_fit > 0.0) no.h_max_fit = a.h_max_fit;
  no.nugget_lo = a.nugget_lo;
  const NlsFit nf = fit_nls(ev, proto, no);

  std::string evcsv = "bin_center,gamma_hat,pair_count\n";
  int nonempty = 0;
  for (Eigen::Index b = 0; b < ev.bin_centers.size(); ++b) {
    evcsv += fmt_g17(ev.bin_centers[b]);
    evcsv += ',';
    if (std::isfinite(ev.gamma_hat[b])) {
      evcsv += fmt_g17(ev.gamma_hat[b]);
      ++nonempty;
    }
    evcsv += ',' + std::to_string(ev.pair_counts[b]) + '\n';
  }
  write_text_file(a.out_empirical, evcsv);

  if (!a.out_model.empty()) {
    std::string mj = "{\n";
    mj += "  \"format\": \"minegp-variogram\",\n";
    mj += "  \"version\": 1,\n";
    mj += "  \"family\": \"" + family_name(nf.model.family) + "\",\n";
    mj += "  \"p\": " + fmt_g17(nf.model.p) + ",\n";
    mj += "  \"nu\": " + fmt_g17(nf.model.nu) + ",\n";
    mj += "  \"nugget_k\": " + fmt_g17(nf.model.nugget_k) + ",\n";
    mj += "  \"partial_sill\": " + fmt_g17(nf.model.partial_sill) + ",\n";
    mj += "  \"range\": " + fmt_g17(nf.model.range) + ",\n";
    mj += std::string("  \"converged\": ") + (nf.converged ? "true" : "false") + ",\n";
    mj += "  \"sse\": " + fmt_g17(nf.sse) + ",\n";
    mj += "  \"bin_width\": " + fmt_g17(bw) + ",\n";
    mj += "  \"h_max\": " + fmt_g17(hm) + ",\n";
    mj += "  \"n_bins\": " + std::to_string((int)ev.bin_centers.size()) + "\n";
    mj += "}\n";
    write_text_file(a.out_model, mj);
  }
  std::printf("variogram: %d bins (%d nonempty); range=%s partial_sill=%s nugget=%s sse=%s\n",
              (int)ev.bin_centers.size(), nonempty, fmt_g17(nf.model.range).c_str(),
              fmt_g17(nf.model.partial_sill).c_str(), fmt_g17(nf.model.nugget_k).c_str(),
              fmt_g17(nf.sse).c_str());
  return 0;
}

struct CvArgs {
  std::string data, out, out_csv;
  std::string models = "svecchia";
  SchemaFlags schema;
};

CvModel model_from(const std::string& s) {
  if (s == "subset") return CvModel::GpSubset;
  if (s == "lagp") return CvModel::Lagp;
  if (s == "slagp") return CvModel::Slagp;
  if (s == "svecchia") return CvModel::Svecchia;
  if (s == "ok") return CvModel::Ok;
  throw std::invalid_argument("unknown model '" + s +
                              "' (choose from subset, lagp, slagp, svecchia, ok)");
}

int run_cv_cmd(const RunConfig& rc, const CvArgs& a) {
  const Dataset raw = load_assay_csv(a.data, resolve_schema(a.schema, a.data));
  const Dataset coded = code_dataset(raw, rc.log_response);

  std::vector<std::string> names = split_commas(a.models);
  std::unordered_set<std::string> seen;
  for (const std::string& n : names) {
    model_from(n);
    if (!seen.insert(n).second) throw std::invalid_argument("model '" + n + "' listed twice");
  }

  CvConfig cfg;
  cfg.seed = rc.seed;
  cfg.subset_m = rc.subset_m;
  cfg.gp.kernel = proto_kernel(rc, true);
  cfg.gp.g_init = rc.g_init;
  cfg.lagp.m = rc.lagp_m;
  cfg.lagp.seed = rc.seed;
  cfg.lagp.kernel.family = family_from(rc.kernel);
  cfg.lagp.kernel.p = rc.p;
  cfg.lagp.kernel.nu = rc.nu;
  cfg.svecchia.kernel = proto_kernel(rc, false);
  cfg.svecchia.m = rc.svecchia_m;
  cfg.svecchia.max_rounds = rc.svecchia_rounds;
  cfg.svecchia.g_init = rc.g_init;
  cfg.ok.m = rc.ok_m;
  cfg.ok_proto.family = family_from(rc.kernel);
  cfg.ok_proto.p = rc.p;
  cfg.ok_proto.nu = rc.nu;
  cfg.score_f_limit = rc.score_f_limit;

  std::vector<NamedCv> runs;
  for (const std::string& n : names) {
    cfg.model = model_from(n);
    CvResult r = run_cv(coded, rc.k_folds, cfg);
    if (!runs.empty() &&
        r.folds.fold_of_record != runs.front().result.folds.fold_of_record)
      throw std::logic_error("internal: folds diverged between models under one seed");
    std::fprintf(stderr, "cv %s: fit %.2fs predict %.2fs\n", n.c_str(), r.summary.fit_seconds,
                 r.summary.predict_seconds);
    std::printf("cv %s: rmse=%s score_p=%s n_errors=%d\n", n.c_str(),
                fmt_g17(r.summary.rmse).c_str(), fmt_g17(r.summary.score_p).c_str(),
                r.summary.n_errors);
    runs.push_back(NamedCv{n, std::move(r)});
  }

  // wall-clock fields stay out of the documents so reruns are byte-identical
  write_text_file(a.out,
                  cv_metrics_json(runs, rc.k_folds, rc.seed, dataset_fingerprint(coded), false));
  if (!a.out_csv.empty()) write_text_file(a.out_csv, cv_metrics_csv(runs, false));
  return 0;
}

struct ImputeArgs {
  std::string data, sites, out_imputed, out_pred;
  std::string engine = "svecchia";
  std::string sites_coords = "auto";
  SchemaFlags schema;
};

int run_impute(const RunConfig& rc, const ImputeArgs& a) {
  CsvSchema schema = resolve_schema(a.schema, a.data);
  const Dataset raw = load_assay_csv(a.data, schema);
  if (raw.censor.empty() || raw.censor.n_censored() == 0)
    throw std::runtime_error(a.data + ": no censored records to impute");
  const Dataset coded = code_dataset(raw, rc.log_response);

  std::vector<int> obs_rows, cens_rows;
  for (int i = 0; i < coded.n(); ++i)
    (coded.censor.censored[(std::size_t)i] ? cens_rows : obs_rows).push_back(i);
  if (obs_rows.empty()) throw std::runtime_error(a.data + ": every record is censored");
  const Dataset dobs = select_rows(coded, obs_rows);
  const Dataset dcen = select_rows(coded, cens_rows);

  std::vector<std::string> site_names = schema.coords;
  Eigen::MatrixXd Xstar_raw;
  if (!a.sites.empty()) {
    const Sites sites = load_sites_csv(a.sites, a.sites_coords);
    if ((int)sites.X.cols() != coded.d())
      throw std::runtime_error(a.sites + ": sites have d=" + std::to_string(sites.X.cols()) +
                               " but the data has d=" + std::to_string(coded.d()));
    site_names = sites.names;
    Xstar_raw = sites.X;
  } else {
    // default: report the pooled predictive at the censored sites themselves
    Xstar_raw = decode_points(coded.coding, dcen.X);
  }
  const Eigen::MatrixXd Xstar = code_points(coded.coding, Xstar_raw);

  ImputeOptions opt;
  opt.M = rc.imputations;
  opt.engine = a.engine == "slagp" ? ImputeEngine::Slagp : ImputeEngine::Svecchia;
  if (a.engine != "slagp" && a.engine != "svecchia")
    throw std::invalid_argument("--engine must be svecchia or slagp");
  opt.epoch_cap = rc.epoch_cap;
  opt.svecchia.kernel = proto_kernel(rc, false);
  opt.svecchia.m = rc.svecchia_m;
  opt.svecchia.max_rounds = rc.svecchia_rounds;
  opt.svecchia.g_init = rc.g_init;
  opt.lagp.m = rc.lagp_m;
  opt.lagp.seed = rc.seed;
  opt.lagp.kernel.family = family_from(rc.kernel);
  opt.lagp.kernel.p = rc.p;
  opt.lagp.kernel.nu = rc.nu;

  RngStream rng = RngStream(rc.seed).substream("impute");
  const ImputationRun run = multiple_impute(dobs, dcen, Xstar, opt, rng);

  int fallbacks = 0;
  for (const Imputation& imp : run.imputations) {
    for (const std::string& w : imp.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    fallbacks += (int)std::count(imp.fallback.begin(), imp.fallback.end(), std::uint8_t(1));
  }

  // imputations decoded back to the recorded scale, one column per draw
  std::vector<Eigen::VectorXd> imp_raw;
  for (const Imputation& imp : run.imputations)
    imp_raw.push_back(decode_response(coded.coding, imp.y_imp));
  std::vector<int> cens_pos((std::size_t)coded.n(), -1);
  for (std::size_t k = 0; k < cens_rows.size(); ++k) cens_pos[(std::size_t)cens_rows[k]] = (int)k;

  std::string out;
  const bool has_holes = !raw.hole_id.empty();
  if (has_holes) out += "hole_id,";
  out += join(schema.coords, ',') + ',' + schema.value + ",censored,detection_limit";
  for (int m = 0; m < run.M; ++m) out += ",imp_" + std::to_string(m + 1);
  out += '\n';
  for (int i = 0; i < raw.n(); ++i) {
    if (has_holes) out += raw.hole_id[(std::size_t)i] + ',';
    for (int j = 0; j < raw.d(); ++j) out += fmt_g17(raw.X(i, j)) + ',';
    out += fmt_g17(raw.Y[i]);
    const bool cen = raw.censor.censored[(std::size_t)i] != 0;
    out += cen ? ",1," : ",0,";
    if (cen && std::isfinite(raw.censor.threshold[i])) out += fmt_g17(raw.censor.threshold[i]);
    for (int m = 0; m < run.M; ++m) {
      out += ',';
      out += cen ? fmt_g17(imp_raw[(std::size_t)m][cens_pos[(std::size_t)i]]) : fmt_g17(raw.Y[i]);
    }
    out += '\n';
  }
  write_text_file(a.out_imputed, out);

  if (!a.out_pred.empty()) {
    const PredictiveDistribution mix = mixture_predictive(run);
    const Eigen::VectorXd decoded = decode_response(coded.coding, mix.mean);
    std::string pred = join(site_names, ',') + ",mean,var,mean_decoded\n";
    for (int i = 0; i < (int)Xstar_raw.rows(); ++i) {
      for (int j = 0; j < (int)Xstar_raw.cols(); ++j) {
        if (j) pred += ',';
        pred += fmt_g17(Xstar_raw(i, j));
      }
      pred += ',' + fmt_g17(mix.mean[i]) + ',' + fmt_g17(mix.var[i]) + ',' +
              fmt_g17(decoded[i]) + '\n';
    }
    write_text_file(a.out_pred, pred);
  }

  std::printf("impute: %d censored records, M=%d (%s engine), %d truncated fallback draws -> %s\n",
              (int)cens_rows.size(), run.M, a.engine.c_str(), fallbacks, a.out_imputed.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaussian-process regression and kriging for drillhole assay data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "minegp 1.0.0");
  app.set_config("--config", "", "read option defaults from an INI/TOML file");

  RunConfig rc;
  app.add_option("--seed", rc.seed, "master random seed; every random choice derives from it")
      ->capture_default_str();
  app.add_option("--threads", rc.threads,
                 "worker threads (0 = all cores, 1 = serial reference path)")
      ->capture_default_str();
  app.add_option("--kernel", rc.kernel, "correlation family: matern or powerexp")
      ->capture_default_str();
  app.add_option("--nu", rc.nu, "matern smoothness (1.5 or 2.5)")->capture_default_str();
  app.add_option("--p", rc.p, "power-exponential exponent in (0,2]")->capture_default_str();
  app.add_flag("--isotropic", rc.isotropic, "single shared lengthscale instead of per-coordinate");
  app.add_option("--g-init", rc.g_init, "nugget initialization for likelihood fits")
      ->capture_default_str();
  app.add_flag("--log-response", rc.log_response, "model the natural log of the response");

  // synth ------------------------------------------------------------------
  SynthArgs sy;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic assay CSV");
  synth->fallthrough();
  synth->add_option("--out", sy.out, "output CSV path")->required();
  synth->add_option("--kind", sy.kind, "toy1d or boreholes")
      ->required()
      ->check(CLI::IsMember({"toy1d", "boreholes"}));
  synth->add_option("--n", sy.n, "toy1d: number of records")->capture_default_str();
  synth->add_option("--noise", sy.noise, "toy1d: observation noise variance")
      ->capture_default_str();
  synth->add_option("--offset", sy.offset, "toy1d: constant added to the sine signal")
      ->capture_default_str();
  synth->add_option("--threshold", sy.threshold, "toy1d: left-censor below this value");
  synth->add_option("--holes", sy.holes, "boreholes: number of holes")->capture_default_str();
  synth->add_option("--per-hole", sy.per_hole, "boreholes: samples per hole")
      ->capture_default_str();
  synth->add_option("--domain", sy.domain, "boreholes: x,y,z extents")->capture_default_str();
  synth->add_option("--censor-frac", sy.censor_frac, "boreholes: fraction left-censored")
      ->capture_default_str();
  synth->add_option("--truth-theta", sy.truth_theta,
                    "boreholes: true lengthscale (nonpositive = from domain size)")
      ->capture_default_str();
  synth->add_option("--truth-tau2", sy.truth_tau2, "boreholes: true scale")->capture_default_str();
  synth->add_option("--truth-g", sy.truth_g, "boreholes: true nugget")->capture_default_str();
  synth->add_option("--truth-nu", sy.truth_nu, "boreholes: true matern smoothness")
      ->capture_default_str();
  synth->add_option("--draw-m", sy.draw_m, "boreholes: conditioning size of the prior draw")
      ->capture_default_str();

  // fit ---------------------------------------------------------------------
  FitArgs fi;
  CLI::App* fit = app.add_subcommand("fit", "fit a global model and serialize it");
  fit->fallthrough();
  fit->add_option("--data", fi.data, "training assay CSV")->required();
  fit->add_option("--out", fi.out, "output fit JSON path")->required();
  fit->add_option("--model", fi.model, "gp (exact) or svecchia")
      ->capture_default_str()
      ->check(CLI::IsMember({"gp", "svecchia"}));
  fit->add_option("--m", rc.svecchia_m, "svecchia conditioning-set size")->capture_default_str();
  fit->add_option("--rounds", rc.svecchia_rounds, "svecchia rescaling rounds")
      ->capture_default_str();
  add_schema_flags(fit, fi.schema);

  // predict -------------------------------------------------------------------
  PredictArgs pr;
  CLI::App* predict = app.add_subcommand("predict", "predict at sites from a serialized fit");
  predict->fallthrough();
  predict->add_option("--fit", pr.fit, "fit JSON from the fit subcommand")->required();
  predict->add_option("--data", pr.data, "the training assay CSV the fit was built from")
      ->required();
  predict->add_option("--sites", pr.sites, "CSV of prediction sites")->required();
  predict->add_option("--out", pr.out, "output predictions CSV")->required();
  predict->add_option("--sites-coords", pr.sites_coords,
                      "coordinate columns in the sites file ('auto' detects)")
      ->capture_default_str();
  predict->add_flag("--force", pr.force, "predict even if the data fingerprint mismatches");
  add_schema_flags(predict, pr.schema);

  // variogram -----------------------------------------------------------------
  VariogramArgs va;
  CLI::App* vgram = app.add_subcommand("variogram", "empirical semivariogram and model fit");
  vgram->fallthrough();
  vgram->add_option("--data", va.data, "assay CSV")->required();
  vgram->add_option("--out-empirical", va.out_empirical, "output CSV of binned semivariances")
      ->required();
  vgram->add_option("--out-model", va.out_model, "output JSON of the fitted model");
  vgram->add_option("--bin-width", va.bin_width, "bin width (nonpositive = bbox diagonal / 30)")
      ->capture_default_str();
  vgram->add_option("--h-max", va.h_max, "largest distance binned (nonpositive = diagonal / 2)")
      ->capture_default_str();
  vgram->add_option("--h-max-fit", va.h_max_fit,
                    "restrict the least-squares fit to bins within this distance")
      ->capture_default_str();
  vgram->add_option("--weights", va.weights, "bin weights: equal or paircount")
      ->capture_default_str();
  vgram->add_option("--nugget-lo", va.nugget_lo, "lower bound for the fitted nugget")
      ->capture_default_str();
  add_schema_flags(vgram, va.schema);

  // cv --------------------------------------------------------------------------
  CvArgs cv;
  CLI::App* cvc = app.add_subcommand("cv", "hole-preserving cross-validation of one or more models");
  cvc->fallthrough();
  cvc->add_option("--data", cv.data, "assay CSV")->required();
  cvc->add_option("--out", cv.out, "output metrics JSON")->required();
  cvc->add_option("--out-csv", cv.out_csv, "also write a flat metrics CSV");
  cvc->add_option("--model", cv.models,
                  "comma-separated subset of: subset, lagp, slagp, svecchia, ok")
      ->capture_default_str();
  cvc->add_option("--k", rc.k_folds, "number of folds")->capture_default_str();
  cvc->add_option("--subset-m", rc.subset_m, "training-subset size of the subset baseline")
      ->capture_default_str();
  cvc->add_option("--lagp-m", rc.lagp_m, "local neighborhood size")->capture_default_str();
  cvc->add_option("--svecchia-m", rc.svecchia_m, "conditioning-set size")->capture_default_str();
  cvc->add_option("--ok-m", rc.ok_m, "kriging neighborhood size")->capture_default_str();
  cvc->add_option("--score-f-limit", rc.score_f_limit,
                  "largest fold size scored with the joint covariance")
      ->capture_default_str();
  add_schema_flags(cvc, cv.schema);

  // impute -------------------------------------------------------------------------
  ImputeArgs im;
  CLI::App* impute = app.add_subcommand("impute", "multiply impute left-censored records");
  impute->fallthrough();
  impute->add_option("--data", im.data, "assay CSV with censored records")->required();
  impute->add_option("--out-imputed", im.out_imputed, "output CSV with one column per imputation")
      ->required();
  impute->add_option("--out-pred", im.out_pred, "output CSV of pooled predictions");
  impute->add_option("--sites", im.sites, "prediction sites CSV (default: the censored sites)");
  impute->add_option("--sites-coords", im.sites_coords,
                     "coordinate columns in the sites file ('auto' detects)")
      ->capture_default_str();
  impute->add_option("--engine", im.engine, "svecchia or slagp")
      ->capture_default_str()
      ->check(CLI::IsMember({"svecchia", "slagp"}));
  impute->add_option("--imputations", rc.imputations, "number of imputations M")
      ->capture_default_str();
  impute->add_option("--epoch-cap", rc.epoch_cap,
                     "joint-draw epochs before the truncated fallback")
      ->capture_default_str();
  impute->add_option("--svecchia-m", rc.svecchia_m, "conditioning-set size")
      ->capture_default_str();
  impute->add_option("--lagp-m", rc.lagp_m, "local neighborhood size")->capture_default_str();
  add_schema_flags(impute, im.schema);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    rc.validate();
#ifdef _OPENMP
    if (rc.threads > 0) omp_set_num_threads(rc.threads);
#endif
    if (*synth) return run_synth(rc, sy);
    if (*fit) return run_fit(rc, fi);
    if (*predict) return run_predict(rc, pr);
    if (*vgram) return run_variogram(rc, va);
    if (*cvc) return run_cv_cmd(rc, cv);
    if (*impute) return run_impute(rc, im);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
