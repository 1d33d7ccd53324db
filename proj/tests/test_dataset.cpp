#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "minegp/dataset.hpp"
#include "minegp/kernel.hpp"
#include "minegp/rng.hpp"

using namespace minegp;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string tmp_path(const char* tag) {
  return std::string("dataset_test_") + tag + ".csv";
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("coding maps columns onto [0,1] and round-trips") {
  Eigen::MatrixXd X(4, 2);
  X << 100, -3, 300, 5, 200, 1, 150, -3;
  Eigen::VectorXd Y(4);
  Y << 1.0, 2.0, 3.0, 4.0;

  Coding c = make_coding(X, Y, false);
  Eigen::MatrixXd Xc = code_points(c, X);
  CHECK(Xc(2, 0) == doctest::Approx(0.5).epsilon(1e-15));  // 200 in [100,300]
  CHECK(Xc.minCoeff() == 0.0);
  CHECK(Xc.maxCoeff() == 1.0);
  for (int j = 0; j < 2; ++j) {
    CHECK(Xc.col(j).minCoeff() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(Xc.col(j).maxCoeff() == doctest::Approx(1.0).epsilon(1e-15));
  }
  Eigen::MatrixXd Xr = decode_points(c, Xc);
  CHECK((Xr - X).cwiseAbs().maxCoeff() < 1e-12);

  // plain response transform: just centering
  Eigen::VectorXd Yc = code_response(c, Y);
  CHECK(Yc.mean() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK((decode_response(c, Yc) - Y).cwiseAbs().maxCoeff() < 1e-12);

  // identity coding passes data through untouched
  Coding id;
  CHECK((code_points(id, X) - X).norm() == 0.0);
  CHECK((decode_points(id, X) - X).norm() == 0.0);
}

TEST_CASE("log response coding recovers original units") {
  Eigen::MatrixXd X(5, 1);
  X << 0, 1, 2, 3, 4;
  Eigen::VectorXd Y(5);
  Y << 120.0, 500.0, 1800.0, 90.0, 350.0;  // concentrations in ppm

  Coding c = make_coding(X, Y, true);
  CHECK(c.log_response);
  Eigen::VectorXd Yt = code_response(c, Y);
  CHECK(Yt.mean() == doctest::Approx(0.0).epsilon(1e-12));
  for (int i = 0; i < 5; ++i)
    CHECK(Yt[i] == doctest::Approx(std::log(Y[i]) - c.y_center).epsilon(1e-15));
  Eigen::VectorXd Yb = decode_response(c, Yt);
  for (int i = 0; i < 5; ++i) CHECK(Yb[i] == doctest::Approx(Y[i]).epsilon(1e-12));
}

TEST_CASE("degenerate coding inputs are rejected") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 7, 2, 7, 3, 7;  // second column constant
  Eigen::VectorXd Y(3);
  Y << 1, 2, 3;
  CHECK_THROWS_AS(make_coding(X, Y, false), std::invalid_argument);

  Eigen::MatrixXd X2(3, 1);
  X2 << 1, 2, 3;
  Eigen::VectorXd Ybad(3);
  Ybad << 5.0, -1.0, 2.0;
  CHECK_THROWS_AS(make_coding(X2, Ybad, true), std::invalid_argument);  // log of negative
  Eigen::VectorXd Yzero(3);
  Yzero << 5.0, 0.0, 2.0;
  CHECK_THROWS_AS(make_coding(X2, Yzero, true), std::invalid_argument);
}

TEST_CASE("code_dataset carries censoring thresholds onto the model scale") {
  Dataset raw;
  raw.X.resize(4, 1);
  raw.X << 10, 20, 30, 40;
  raw.Y.resize(4);
  raw.Y << 0.05, 2.0, 0.05, 8.0;  // two records at the detection limit
  raw.censor.censored = {1, 0, 1, 0};
  raw.censor.threshold.resize(4);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  raw.censor.threshold << 0.05, nan, 0.05, nan;

  Dataset ds = code_dataset(raw, true);
  CHECK(ds.coding.log_response);
  CHECK(ds.censor.censored == raw.censor.censored);
  for (int i : {0, 2}) {
    // recorded-at-limit rows stay pinned to their transformed threshold
    CHECK(ds.censor.threshold[i] == doctest::Approx(std::log(0.05) - ds.coding.y_center)
                                        .epsilon(1e-15));
    CHECK(ds.Y[i] == doctest::Approx(ds.censor.threshold[i]).epsilon(1e-15));
  }
  CHECK(std::isnan(ds.censor.threshold[1]));
  CHECK(std::isnan(ds.censor.threshold[3]));

  // without censoring the spec stays empty
  Dataset raw2 = raw;
  raw2.censor = CensorSpec{};
  Dataset ds2 = code_dataset(raw2, false);
  CHECK(ds2.censor.empty());
}

TEST_CASE("1d toy generator: truth, noise level, reproducibility") {
  RngStream rng(42);
  const int n = 4000;
  Synthetic1d s = gen_synthetic_1d(n, 0.1, std::nullopt, rng);
  CHECK(s.data.n() == n);
  CHECK(s.data.d() == 1);
  CHECK(s.data.censor.empty());
  CHECK(s.data.X.minCoeff() >= 0.0);
  CHECK(s.data.X.maxCoeff() <= 1.0);
  for (int i = 0; i < n; ++i)
    CHECK(s.latent[i] == doctest::Approx(2.0 + 2.0 * std::sin(4.0 * M_PI * s.data.X(i, 0)))
                             .epsilon(1e-15));
  Eigen::VectorXd eps = s.data.Y - s.latent;
  CHECK(std::abs(eps.mean()) < 4.0 * std::sqrt(0.1 / n));
  const double ev = eps.squaredNorm() / n;
  CHECK(ev == doctest::Approx(0.1).epsilon(0.1));

  // same seed reproduces the draw; the offset shifts responses exactly
  RngStream rng2(42);
  Synthetic1d s2 = gen_synthetic_1d(n, 0.1, std::nullopt, rng2, 0.0);
  CHECK((s.data.X - s2.data.X).norm() == 0.0);
  CHECK(((s.data.Y - s2.data.Y).array() - 2.0).abs().maxCoeff() < 1e-12);

  RngStream rng3(43);
  Synthetic1d s3 = gen_synthetic_1d(n, 0.1, std::nullopt, rng3);
  CHECK((s.data.X - s3.data.X).norm() > 0.0);
}

TEST_CASE("1d toy generator applies a left threshold") {
  RngStream rng(7);
  Synthetic1d s = gen_synthetic_1d(3000, 0.1, 1.0, rng, 0.0);  // f = 2 sin(4 pi x)
  REQUIRE(!s.data.censor.empty());
  int nc = s.data.censor.n_censored();
  // f <= 1 over most of [0,1] for the centered variant
  CHECK(nc > 3000 / 4);
  CHECK(nc < 3000);
  for (int i = 0; i < s.data.n(); ++i) {
    if (s.data.censor.censored[static_cast<size_t>(i)]) {
      CHECK(s.data.Y[i] == 1.0);  // recorded at the limit
      CHECK(s.data.censor.threshold[i] == 1.0);
    } else {
      CHECK(s.data.Y[i] >= 1.0);
      CHECK(std::isnan(s.data.censor.threshold[i]));
    }
  }
}

TEST_CASE("borehole generator: geometry and hole structure") {
  RngStream rng(11);
  Eigen::VectorXd domain(3);
  domain << 1.0, 1.0, 1.0;
  Hyperparams phi;
  phi.kernel = Kernel::matern(2.5, 0.3);
  phi.tau2 = 1.0;
  phi.g = 0.01;
  const int H = 30, P = 12;
  Dataset ds = gen_synthetic_boreholes(H, P, domain, phi, 0.0, rng);
  REQUIRE(ds.n() == H * P);
  CHECK(ds.d() == 3);
  CHECK(ds.censor.empty());

  std::set<std::string> ids(ds.hole_id.begin(), ds.hole_id.end());
  CHECK(static_cast<int>(ids.size()) == H);

  for (int h = 0; h < H; ++h) {
    const int base = h * P;
    // one contiguous block per hole
    for (int k = 0; k < P; ++k) CHECK(ds.hole_id[static_cast<size_t>(base + k)] == ds.hole_id[static_cast<size_t>(base)]);
    // equally spaced and exactly collinear samples
    Eigen::Vector3d step = (ds.X.row(base + 1) - ds.X.row(base)).transpose();
    for (int k = 1; k + 1 < P; ++k) {
      Eigen::Vector3d s2 = (ds.X.row(base + k + 1) - ds.X.row(base + k)).transpose();
      CHECK((s2 - step).norm() < 1e-12);
    }
    // near-vertical: the unit direction points mostly down-hole
    CHECK(step.normalized()[2] > 0.9);
    // collar at surface, inside the box footprint
    CHECK(ds.X(base, 2) == 0.0);
    CHECK(ds.X(base, 0) >= 0.0);
    CHECK(ds.X(base, 0) <= 1.0);
    CHECK(ds.X(base, 1) >= 0.0);
    CHECK(ds.X(base, 1) <= 1.0);
  }

  // spatial continuity: consecutive in-hole increments are far smaller than
  // increments between random pairs
  RngStream prng(5);
  double within = 0.0;
  int nw = 0;
  for (int h = 0; h < H; ++h)
    for (int k = 0; k + 1 < P; ++k, ++nw)
      within += std::abs(ds.Y[h * P + k + 1] - ds.Y[h * P + k]);
  within /= nw;
  double across = 0.0;
  const int M = 4000;
  for (int t = 0; t < M; ++t) {
    int a = prng.bounded(ds.n()), b = prng.bounded(ds.n());
    across += std::abs(ds.Y[a] - ds.Y[b]);
  }
  across /= M;
  CHECK(within < 0.5 * across);
}

TEST_CASE("borehole generator: censoring at the empirical quantile") {
  RngStream rng(3);
  Eigen::VectorXd domain(3);
  domain << 1.0, 1.0, 1.0;
  Hyperparams phi;
  phi.kernel = Kernel::matern(2.5, 0.3);
  phi.tau2 = 1.0;
  phi.g = 0.05;
  Dataset ds = gen_synthetic_boreholes(30, 12, domain, phi, 0.4, rng);
  REQUIRE(!ds.censor.empty());
  const int n = ds.n();
  CHECK(ds.censor.n_censored() == static_cast<int>(std::floor(0.4 * n)));

  double thr = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < n; ++i)
    if (ds.censor.censored[static_cast<size_t>(i)]) {
      thr = ds.censor.threshold[i];
      break;
    }
  REQUIRE(std::isfinite(thr));
  for (int i = 0; i < n; ++i) {
    if (ds.censor.censored[static_cast<size_t>(i)]) {
      CHECK(ds.Y[i] == thr);
      CHECK(ds.censor.threshold[i] == thr);  // one shared detection limit
    } else {
      CHECK(ds.Y[i] >= thr);
    }
  }

  // invalid requests
  RngStream r2(1);
  CHECK_THROWS_AS(gen_synthetic_boreholes(30, 12, domain, phi, 1.0, r2), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic_boreholes(30, 12, domain, phi, -0.1, r2), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic_boreholes(0, 12, domain, phi, 0.0, r2), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic_boreholes(30, 1, domain, phi, 0.0, r2), std::invalid_argument);
  Eigen::VectorXd bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(gen_synthetic_boreholes(30, 12, bad, phi, 0.0, r2), std::invalid_argument);
}

TEST_CASE("assay csv round-trips bit-exactly") {
  RngStream rng(19);
  Eigen::VectorXd domain(3);
  domain << 2.0, 3.0, 1.5;
  Hyperparams phi;
  phi.kernel = Kernel::matern(1.5, 0.4);
  phi.tau2 = 2.0;
  phi.g = 0.1;
  Dataset ds = gen_synthetic_boreholes(8, 6, domain, phi, 0.3, rng);

  const std::string path = tmp_path("roundtrip");
  save_assay_csv(ds, path);
  Dataset back = load_assay_csv(path);
  REQUIRE(back.n() == ds.n());
  CHECK((back.X - ds.X).cwiseAbs().maxCoeff() == 0.0);  // %.17g is lossless
  CHECK((back.Y - ds.Y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.hole_id == ds.hole_id);
  REQUIRE(!back.censor.empty());
  CHECK(back.censor.censored == ds.censor.censored);
  for (int i = 0; i < ds.n(); ++i) {
    if (ds.censor.censored[static_cast<size_t>(i)])
      CHECK(back.censor.threshold[i] == ds.censor.threshold[i]);
    else
      CHECK(std::isnan(back.censor.threshold[i]));
  }
  CHECK(dataset_fingerprint(back) == dataset_fingerprint(ds));
  std::remove(path.c_str());
}

TEST_CASE("hole-free datasets round-trip through the assay format") {
  RngStream rng(23);
  const Synthetic1d s = gen_synthetic_1d(25, 0.05, 1.0, rng);
  REQUIRE(s.data.hole_id.empty());

  const std::string path = tmp_path("holefree");
  save_assay_csv(s.data, path);  // writes a hole_id column of blank cells

  CsvSchema sc;
  sc.coords = {"x1"};
  const Dataset back = load_assay_csv(path, sc);
  CHECK(back.hole_id.empty());  // an all-blank hole column is no hole structure
  CHECK(dataset_fingerprint(back) == dataset_fingerprint(s.data));
  std::remove(path.c_str());
}

TEST_CASE("csv loader diagnostics carry line and column detail") {
  const std::string ok_head = "hole_id,x,y,z,value,censored,detection_limit\n";

  SUBCASE("missing required columns") {
    const std::string p = tmp_path("badcols");
    write_file(p, "hole_id,x,y,grade\nH1,0,0,1\n");
    CHECK_THROWS_WITH_AS(load_assay_csv(p), doctest::Contains("missing required column"),
                         std::runtime_error);
    std::remove(p.c_str());
  }

  SUBCASE("non-numeric coordinate names the line and column") {
    const std::string p = tmp_path("badnum");
    write_file(p, ok_head + "H1,0,0,0,1.5,,\nH1,0,oops,2,1.5,,\n");
    CHECK_THROWS_WITH_AS(load_assay_csv(p), doctest::Contains(":3: column y"),
                         std::runtime_error);
    std::remove(p.c_str());
  }

  SUBCASE("blank coordinates reject the row, not the file") {
    const std::string p = tmp_path("blank");
    write_file(p, ok_head + "H1,0,0,0,1.5,,\nH1,,0,1,2.5,,\nH1,0,0,2,3.5,,\n");
    std::vector<std::string> rejected;
    Dataset ds = load_assay_csv(p, {}, &rejected);
    CHECK(ds.n() == 2);
    REQUIRE(rejected.size() == 1);
    CHECK(rejected[0].find(":3:") != std::string::npos);
    CHECK(rejected[0].find("missing x") != std::string::npos);
    // without a rejection sink the same file is an error
    CHECK_THROWS_WITH_AS(load_assay_csv(p), doctest::Contains("row(s) rejected"),
                         std::runtime_error);
    std::remove(p.c_str());
  }

  SUBCASE("censored rows need a detection limit") {
    const std::string p = tmp_path("cens");
    write_file(p, ok_head + "H1,0,0,0,0.05,1,\nH1,0,0,1,2.5,0,\n");
    std::vector<std::string> rejected;
    Dataset ds = load_assay_csv(p, {}, &rejected);
    CHECK(ds.n() == 1);
    REQUIRE(rejected.size() == 1);
    CHECK(rejected[0].find("detection_limit") != std::string::npos);
    std::remove(p.c_str());
  }

  SUBCASE("malformed flag and ragged rows are hard errors") {
    const std::string p = tmp_path("flag");
    write_file(p, ok_head + "H1,0,0,0,1.0,2,\n");
    CHECK_THROWS_WITH_AS(load_assay_csv(p), doctest::Contains("expected 0 or 1"),
                         std::runtime_error);
    write_file(p, ok_head + "H1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_assay_csv(p), doctest::Contains("expected 7 fields"),
                         std::runtime_error);
    write_file(p, "");
    CHECK_THROWS_AS(load_assay_csv(p), std::runtime_error);
    std::remove(p.c_str());
  }

  SUBCASE("windows line endings and a censor-free schema load cleanly") {
    const std::string p = tmp_path("crlf");
    write_file(p, "hole_id,x,y,z,value\r\nH1,0,0,0,1.5\r\nH2,1,1,1,2.5\r\n");
    Dataset ds = load_assay_csv(p);
    CHECK(ds.n() == 2);
    CHECK(ds.censor.empty());
    CHECK(ds.hole_id[1] == "H2");
    CHECK(ds.Y[1] == 2.5);
    std::remove(p.c_str());
  }
}

TEST_CASE("fingerprint: pinned value, sensitivity, stability") {
  Dataset ds;
  ds.X.resize(2, 1);
  ds.X << 0.0, 1.0;
  ds.Y.resize(2);
  ds.Y << 0.5, -0.25;
  // pinned digest guards the hashed field layout
  CHECK(dataset_fingerprint(ds) == "a1b7605a5b08e027");
  CHECK(dataset_fingerprint(ds).size() == 16);

  Dataset ds2 = ds;
  ds2.Y[0] = std::nextafter(0.5, 1.0);
  CHECK(dataset_fingerprint(ds2) != dataset_fingerprint(ds));

  Dataset ds3 = ds;
  ds3.X(0, 0) = 1.0;
  ds3.X(1, 0) = 0.0;
  CHECK(dataset_fingerprint(ds3) != dataset_fingerprint(ds));

  Dataset ds4 = ds;
  ds4.censor.censored = {0, 1};
  ds4.censor.threshold.resize(2);
  ds4.censor.threshold << std::numeric_limits<double>::quiet_NaN(), -0.25;
  CHECK(dataset_fingerprint(ds4) != dataset_fingerprint(ds));

  Dataset ds5 = ds;
  ds5.hole_id = {"A", "B"};
  CHECK(dataset_fingerprint(ds5) != dataset_fingerprint(ds));
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("g17 formatting round-trips doubles exactly") {
  const double vals[] = {1.0 / 3.0,
                         0.1,
                         -0.0,
                         1e-300,
                         1.7976931348623157e308,
                         3.141592653589793,
                         2.2250738585072014e-308,
                         123456789.123456789};
  for (double v : vals) {
    const std::string s = fmt_g17(v);
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
}

}  // TEST_SUITE
