#include "minegp/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "minegp/rng.hpp"
#include "minegp/vecchia.hpp"

namespace minegp {

int CensorSpec::n_censored() const {
  int k = 0;
  for (std::uint8_t c : censored) k += (c != 0);
  return k;
}

void Dataset::validate() const {
  const int nn = n();
  if (Y.size() != nn) throw std::invalid_argument("dataset: X/Y size mismatch");
  if (!hole_id.empty() && static_cast<int>(hole_id.size()) != nn)
    throw std::invalid_argument("dataset: hole_id size mismatch");
  if (!censor.empty()) {
    if (static_cast<int>(censor.censored.size()) != nn || censor.threshold.size() != nn)
      throw std::invalid_argument("dataset: censor spec size mismatch");
    for (int i = 0; i < nn; ++i)
      if (censor.censored[i] && !std::isfinite(censor.threshold[i]))
        throw std::invalid_argument("dataset: censored record lacks a finite threshold");
  }
  if (!coding.columns.empty() && static_cast<int>(coding.columns.size()) != d())
    throw std::invalid_argument("dataset: coding has wrong number of columns");
}

Eigen::MatrixXd code_points(const Coding& c, const Eigen::MatrixXd& raw) {
  if (c.columns.empty()) return raw;
  if (raw.cols() != static_cast<Eigen::Index>(c.columns.size()))
    throw std::invalid_argument("code_points: dimension mismatch");
  Eigen::MatrixXd out = raw;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - c.columns[j].offset) / c.columns[j].scale;
  return out;
}

Eigen::MatrixXd decode_points(const Coding& c, const Eigen::MatrixXd& coded) {
  if (c.columns.empty()) return coded;
  if (coded.cols() != static_cast<Eigen::Index>(c.columns.size()))
    throw std::invalid_argument("decode_points: dimension mismatch");
  Eigen::MatrixXd out = coded;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = out.col(j).array() * c.columns[j].scale + c.columns[j].offset;
  return out;
}

Eigen::VectorXd code_response(const Coding& c, const Eigen::VectorXd& raw) {
  Eigen::VectorXd out = raw;
  if (c.log_response) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (!(out[i] > 0.0))
        throw std::invalid_argument("code_response: log transform needs positive values");
      out[i] = std::log(out[i]);
    }
  }
  out.array() -= c.y_center;
  return out;
}

Eigen::VectorXd decode_response(const Coding& c, const Eigen::VectorXd& coded) {
  Eigen::VectorXd out = coded.array() + c.y_center;
  if (c.log_response) out = out.array().exp();
  return out;
}

Coding make_coding(const Eigen::MatrixXd& rawX, const Eigen::VectorXd& rawY, bool log_response) {
  if (rawX.rows() != rawY.size())
    throw std::invalid_argument("make_coding: X/Y size mismatch");
  if (rawX.rows() < 2) throw std::invalid_argument("make_coding: need at least two records");
  Coding c;
  c.columns.resize(static_cast<size_t>(rawX.cols()));
  for (Eigen::Index j = 0; j < rawX.cols(); ++j) {
    const double mn = rawX.col(j).minCoeff();
    const double mx = rawX.col(j).maxCoeff();
    if (!(mx > mn)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "make_coding: coordinate column %d is constant",
                    static_cast<int>(j));
      throw std::invalid_argument(buf);
    }
    c.columns[static_cast<size_t>(j)] = {mn, mx - mn};
  }
  c.log_response = log_response;
  c.y_center = 0.0;
  Eigen::VectorXd yt = code_response(c, rawY);  // validates positivity under log
  c.y_center = yt.mean();
  return c;
}

Dataset code_dataset(const Dataset& raw, bool log_response) {
  raw.validate();
  Dataset out;
  out.coding = make_coding(raw.X, raw.Y, log_response);
  out.X = code_points(out.coding, raw.X);
  out.Y = code_response(out.coding, raw.Y);
  out.hole_id = raw.hole_id;
  if (!raw.censor.empty()) {
    out.censor.censored = raw.censor.censored;
    out.censor.threshold =
        Eigen::VectorXd::Constant(raw.n(), std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < raw.n(); ++i) {
      if (!raw.censor.censored[i]) continue;
      // detection limits live on the response scale and move with it
      Eigen::VectorXd t(1);
      t[0] = raw.censor.threshold[i];
      out.censor.threshold[i] = code_response(out.coding, t)[0];
    }
  }
  out.validate();
  return out;
}

Dataset select_rows(const Dataset& d, const std::vector<int>& rows) {
  d.validate();
  const int nk = static_cast<int>(rows.size());
  Dataset out;
  out.X.resize(nk, d.d());
  out.Y.resize(nk);
  out.coding = d.coding;
  if (!d.hole_id.empty()) out.hole_id.resize(static_cast<size_t>(nk));
  if (!d.censor.empty()) {
    out.censor.censored.resize(static_cast<size_t>(nk));
    out.censor.threshold.resize(nk);
    out.censor.direction = d.censor.direction;
  }
  for (int w = 0; w < nk; ++w) {
    const int i = rows[static_cast<size_t>(w)];
    if (i < 0 || i >= d.n()) throw std::out_of_range("select_rows: row index out of range");
    out.X.row(w) = d.X.row(i);
    out.Y[w] = d.Y[i];
    if (!d.hole_id.empty()) out.hole_id[static_cast<size_t>(w)] = d.hole_id[static_cast<size_t>(i)];
    if (!d.censor.empty()) {
      out.censor.censored[static_cast<size_t>(w)] = d.censor.censored[static_cast<size_t>(i)];
      out.censor.threshold[w] = d.censor.threshold[i];
    }
  }
  return out;
}

// --- CSV ---

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string t = s.substr(a, b - a);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return t;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  const char* p = s.c_str();
  char* end = nullptr;
  double v = std::strtod(p, &end);
  if (end == p) return false;
  while (*end && std::isspace(static_cast<unsigned char>(*end))) ++end;
  if (*end) return false;
  *out = v;
  return true;
}

[[noreturn]] void csv_error(const std::string& path, int line, const std::string& msg) {
  std::ostringstream os;
  os << path << ":" << line << ": " << msg;
  throw std::runtime_error(os.str());
}

}  // namespace

Dataset load_assay_csv(const std::string& path, const CsvSchema& schema,
                       std::vector<std::string>* rejected) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);

  std::unordered_map<std::string, int> col;
  for (size_t j = 0; j < header.size(); ++j) col.emplace(header[j], static_cast<int>(j));

  auto find = [&](const std::string& name) -> int {
    auto it = col.find(name);
    return it == col.end() ? -1 : it->second;
  };

  const int d = static_cast<int>(schema.coords.size());
  std::vector<int> ccol(static_cast<size_t>(d));
  std::vector<std::string> missing;
  for (int j = 0; j < d; ++j) {
    ccol[static_cast<size_t>(j)] = find(schema.coords[static_cast<size_t>(j)]);
    if (ccol[static_cast<size_t>(j)] < 0) missing.push_back(schema.coords[static_cast<size_t>(j)]);
  }
  // an empty hole_id name opts out of hole structure (point-support data)
  const int hcol = schema.hole_id.empty() ? -1 : find(schema.hole_id);
  const int vcol = find(schema.value);
  if (hcol < 0 && !schema.hole_id.empty()) missing.push_back(schema.hole_id);
  if (vcol < 0) missing.push_back(schema.value);
  if (!missing.empty()) {
    std::ostringstream os;
    os << path << ": missing required column(s):";
    for (const auto& m : missing) os << " " << m;
    throw std::runtime_error(os.str());
  }
  const int fcol = find(schema.censored);         // optional
  const int lcol = find(schema.detection_limit);  // required only for flagged rows

  std::vector<std::string> holes;
  std::vector<double> coords, values, limits;
  std::vector<std::uint8_t> flags;
  std::vector<std::string> rej;

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split_line(line);
    if (f.size() != header.size()) {
      std::ostringstream os;
      os << "expected " << header.size() << " fields, got " << f.size();
      csv_error(path, lineno, os.str());
    }

    std::vector<double> cv(static_cast<size_t>(d));
    bool blank = false;
    std::string blank_name;
    for (int j = 0; j < d; ++j) {
      const std::string& cell = f[static_cast<size_t>(ccol[static_cast<size_t>(j)])];
      if (cell.empty()) {
        blank = true;
        blank_name = schema.coords[static_cast<size_t>(j)];
        break;
      }
      if (!parse_double(cell, &cv[static_cast<size_t>(j)]))
        csv_error(path, lineno,
                  "column " + schema.coords[static_cast<size_t>(j)] + ": non-numeric value '" +
                      cell + "'");
    }
    if (blank) {
      std::ostringstream os;
      os << path << ":" << lineno << ": missing " << blank_name << " coordinate, row skipped";
      rej.push_back(os.str());
      continue;
    }

    const std::string& vcell = f[static_cast<size_t>(vcol)];
    double val;
    if (vcell.empty()) {
      std::ostringstream os;
      os << path << ":" << lineno << ": missing value, row skipped";
      rej.push_back(os.str());
      continue;
    }
    if (!parse_double(vcell, &val))
      csv_error(path, lineno, "column " + schema.value + ": non-numeric value '" + vcell + "'");

    std::uint8_t cflag = 0;
    double limit = std::numeric_limits<double>::quiet_NaN();
    if (fcol >= 0) {
      const std::string& fc = f[static_cast<size_t>(fcol)];
      if (!fc.empty()) {
        if (fc == "0")
          cflag = 0;
        else if (fc == "1")
          cflag = 1;
        else
          csv_error(path, lineno, "column " + schema.censored + ": expected 0 or 1, got '" + fc + "'");
      }
      if (cflag) {
        const std::string lc = lcol >= 0 ? f[static_cast<size_t>(lcol)] : std::string();
        if (lc.empty()) {
          std::ostringstream os;
          os << path << ":" << lineno << ": censored row without detection_limit, row skipped";
          rej.push_back(os.str());
          continue;
        }
        if (!parse_double(lc, &limit))
          csv_error(path, lineno,
                    "column " + schema.detection_limit + ": non-numeric value '" + lc + "'");
      }
    }

    if (hcol >= 0) holes.push_back(f[static_cast<size_t>(hcol)]);
    for (int j = 0; j < d; ++j) coords.push_back(cv[static_cast<size_t>(j)]);
    values.push_back(val);
    flags.push_back(cflag);
    limits.push_back(limit);
  }

  if (!rej.empty()) {
    if (rejected) {
      *rejected = std::move(rej);
    } else {
      std::ostringstream os;
      os << path << ": " << rej.size() << " row(s) rejected:";
      const size_t show = std::min<size_t>(rej.size(), 20);
      for (size_t i = 0; i < show; ++i) os << "\n  " << rej[i];
      if (rej.size() > show) os << "\n  ... and " << (rej.size() - show) << " more";
      throw std::runtime_error(os.str());
    }
  } else if (rejected) {
    rejected->clear();
  }

  const int n = static_cast<int>(values.size());
  Dataset ds;
  ds.X.resize(n, d);
  ds.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.X(i, j) = coords[static_cast<size_t>(i * d + j)];
    ds.Y[i] = values[static_cast<size_t>(i)];
  }
  ds.hole_id = std::move(holes);
  // a hole column whose every cell is blank carries no hole structure
  if (!ds.hole_id.empty() &&
      std::all_of(ds.hole_id.begin(), ds.hole_id.end(),
                  [](const std::string& h) { return h.empty(); }))
    ds.hole_id.clear();
  if (fcol >= 0) {
    ds.censor.censored = std::move(flags);
    ds.censor.threshold = Eigen::Map<Eigen::VectorXd>(limits.data(), n);
  }
  ds.validate();
  return ds;
}

void save_assay_csv(const Dataset& d, const std::string& path,
                    const std::vector<std::uint8_t>* imputed) {
  d.validate();
  if (imputed && static_cast<int>(imputed->size()) != d.n())
    throw std::invalid_argument("save_assay_csv: imputed flag size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);

  const int dim = d.d();
  out << "hole_id";
  if (dim == 3) {
    out << ",x,y,z";
  } else {
    for (int j = 0; j < dim; ++j) out << ",x" << (j + 1);
  }
  out << ",value";
  const bool has_censor = !d.censor.empty();
  if (has_censor) out << ",censored,detection_limit";
  if (imputed) out << ",imputed";
  out << "\n";

  for (int i = 0; i < d.n(); ++i) {
    out << (d.hole_id.empty() ? std::string() : d.hole_id[static_cast<size_t>(i)]);
    for (int j = 0; j < dim; ++j) out << "," << fmt_g17(d.X(i, j));
    out << "," << fmt_g17(d.Y[i]);
    if (has_censor) {
      out << "," << int(d.censor.censored[static_cast<size_t>(i)]) << ",";
      if (std::isfinite(d.censor.threshold[i])) out << fmt_g17(d.censor.threshold[i]);
    }
    if (imputed) out << "," << int((*imputed)[static_cast<size_t>(i)]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

// --- synthetic data ---

double Synthetic1d::truth(double x) const { return offset + 2.0 * std::sin(4.0 * M_PI * x); }

Synthetic1d gen_synthetic_1d(int n, double noise_var, std::optional<double> threshold,
                             RngStream& rng, double offset) {
  if (n < 1) throw std::invalid_argument("gen_synthetic_1d: n must be positive");
  if (noise_var < 0.0) throw std::invalid_argument("gen_synthetic_1d: negative noise variance");
  Synthetic1d out;
  out.offset = offset;
  out.data.X.resize(n, 1);
  out.data.Y.resize(n);
  out.latent.resize(n);
  const double sd = std::sqrt(noise_var);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform();
    out.data.X(i, 0) = x;
    out.latent[i] = out.truth(x);
    out.data.Y[i] = out.latent[i] + sd * rng.normal();
  }
  if (threshold) {
    const double thr = *threshold;
    out.data.censor.censored.assign(static_cast<size_t>(n), 0);
    out.data.censor.threshold =
        Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < n; ++i) {
      if (out.data.Y[i] < thr) {
        out.data.censor.censored[static_cast<size_t>(i)] = 1;
        out.data.censor.threshold[i] = thr;
        out.data.Y[i] = thr;  // recorded at the detection limit
      }
    }
  }
  out.data.validate();
  return out;
}

Dataset gen_synthetic_boreholes(int n_holes, int pts_per_hole, const Eigen::VectorXd& domain,
                                const Hyperparams& gp_truth, double censor_frac, RngStream& rng,
                                int draw_m) {
  if (n_holes < 1) throw std::invalid_argument("gen_synthetic_boreholes: need at least one hole");
  if (pts_per_hole < 2)
    throw std::invalid_argument("gen_synthetic_boreholes: need at least two samples per hole");
  if (domain.size() != 3 || (domain.array() <= 0.0).any())
    throw std::invalid_argument("gen_synthetic_boreholes: domain must be a positive 3-vector");
  if (!(censor_frac >= 0.0 && censor_frac < 1.0))
    throw std::invalid_argument("gen_synthetic_boreholes: censor_frac must lie in [0,1)");
  if (draw_m < 1) throw std::invalid_argument("gen_synthetic_boreholes: draw_m must be positive");

  const int n = n_holes * pts_per_hole;
  Dataset ds;
  ds.X.resize(n, 3);
  ds.hole_id.resize(static_cast<size_t>(n));

  int r = 0;
  for (int h = 0; h < n_holes; ++h) {
    char name[16];
    std::snprintf(name, sizeof name, "H%05d", h);
    const double cx = domain[0] * rng.uniform();
    const double cy = domain[1] * rng.uniform();
    // near-vertical: unit direction tilted by a few degrees at random
    Eigen::Vector3d dir(0.08 * rng.normal(), 0.08 * rng.normal(), 1.0);
    dir.normalize();
    const double length = domain[2] * (0.70 + 0.25 * rng.uniform());
    const double spacing = length / (pts_per_hole - 1);
    for (int k = 0; k < pts_per_hole; ++k, ++r) {
      ds.X(r, 0) = cx + dir[0] * spacing * k;
      ds.X(r, 1) = cy + dir[1] * spacing * k;
      ds.X(r, 2) = dir[2] * spacing * k;
      ds.hole_id[static_cast<size_t>(r)] = name;
    }
  }

  // Responses from the gp_truth prior: sequential conditional draws, each
  // site given its draw_m nearest predecessors in maximin order. This is a
  // draw from the nearest-neighbor-factorized prior, exact as draw_m grows.
  ConditioningSets cs = build_conditioning_sets(ds.X, std::min(draw_m, n - 1));
  SparseUFactor u = build_u(gp_truth, ds.X, cs);
  Eigen::VectorXd yo(n);
  for (int i = 0; i < n; ++i) {
    const double si = std::sqrt(u.sigma2[i]);
    double v = si * rng.normal();
    for (size_t a = 0; a < u.rows[static_cast<size_t>(i)].size(); ++a)
      v -= u.vals[static_cast<size_t>(i)][a] * si * yo[u.rows[static_cast<size_t>(i)][a]];
    yo[i] = v;
  }
  ds.Y.resize(n);
  for (int i = 0; i < n; ++i) ds.Y[cs.order[static_cast<size_t>(i)]] = yo[i];

  if (censor_frac > 0.0) {
    std::vector<double> sorted(ds.Y.data(), ds.Y.data() + n);
    const int k = static_cast<int>(std::floor(censor_frac * n));
    if (k > 0) {
      std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
      const double thr = sorted[static_cast<size_t>(k)];
      ds.censor.censored.assign(static_cast<size_t>(n), 0);
      ds.censor.threshold =
          Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
      for (int i = 0; i < n; ++i) {
        if (ds.Y[i] < thr) {
          ds.censor.censored[static_cast<size_t>(i)] = 1;
          ds.censor.threshold[i] = thr;
          ds.Y[i] = thr;
        }
      }
    }
  }
  ds.validate();
  return ds;
}

// --- fingerprint and formatting ---

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::uint64_t hash_double(double v, std::uint64_t h) {
  if (std::isnan(v)) v = std::numeric_limits<double>::quiet_NaN();  // canonical bit pattern
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return fnv1a64(&bits, sizeof bits, h);
}

std::uint64_t hash_i64(std::int64_t v, std::uint64_t h) { return fnv1a64(&v, sizeof v, h); }

}  // namespace

std::string dataset_fingerprint(const Dataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = hash_i64(d.n(), h);
  h = hash_i64(d.d(), h);
  for (Eigen::Index j = 0; j < d.X.cols(); ++j)
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) h = hash_double(d.X(i, j), h);
  for (Eigen::Index i = 0; i < d.Y.size(); ++i) h = hash_double(d.Y[i], h);
  h = hash_i64(static_cast<std::int64_t>(d.hole_id.size()), h);
  for (const auto& s : d.hole_id) {
    h = hash_i64(static_cast<std::int64_t>(s.size()), h);
    h = fnv1a64(s.data(), s.size(), h);
  }
  h = hash_i64(static_cast<std::int64_t>(d.censor.censored.size()), h);
  if (!d.censor.empty()) {
    h = hash_i64(static_cast<std::int64_t>(d.censor.direction), h);
    h = fnv1a64(d.censor.censored.data(), d.censor.censored.size(), h);
    for (Eigen::Index i = 0; i < d.censor.threshold.size(); ++i)
      h = hash_double(d.censor.threshold[i], h);
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace minegp
