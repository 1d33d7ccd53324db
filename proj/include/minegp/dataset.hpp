#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minegp/gp.hpp"

namespace minegp {

class RngStream;

// Left: the true value lies at or below the recorded limit (the assay
// detection-limit convention). Right is the mirror case.
enum class CensorDirection { Left, Right };

// Per-record censoring marks. A censored record's response was recorded at
// its detection limit; threshold holds that limit (NaN when observed).
struct CensorSpec {
  std::vector<std::uint8_t> censored;
  Eigen::VectorXd threshold;
  CensorDirection direction = CensorDirection::Left;

  bool empty() const { return censored.empty(); }
  int n_censored() const;
};

// Input/response transform record: coded_x = (raw_x - offset) / scale per
// column; coded_y = (log raw_y if log_response else raw_y) - y_center.
struct ColumnCoding {
  double offset = 0.0;
  double scale = 1.0;
};

struct Coding {
  std::vector<ColumnCoding> columns;  // empty = identity
  bool log_response = false;
  double y_center = 0.0;
};

Eigen::MatrixXd code_points(const Coding& c, const Eigen::MatrixXd& raw);
Eigen::MatrixXd decode_points(const Coding& c, const Eigen::MatrixXd& coded);
Eigen::VectorXd code_response(const Coding& c, const Eigen::VectorXd& raw);
Eigen::VectorXd decode_response(const Coding& c, const Eigen::VectorXd& coded);

struct Dataset {
  Eigen::MatrixXd X;                 // inputs (coded when coding.columns is set)
  Eigen::VectorXd Y;                 // responses (same convention)
  std::vector<std::string> hole_id;  // may be empty (no hole structure)
  CensorSpec censor;                 // may be empty (nothing censored)
  Coding coding;

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  void validate() const;  // size consistency + censored-threshold invariant
};

// Min-max column coding from training data plus the response transform;
// throws on a constant coordinate column or nonpositive responses under log.
Coding make_coding(const Eigen::MatrixXd& rawX, const Eigen::VectorXd& rawY, bool log_response);

// Apply make_coding to every field of a raw dataset (censor thresholds move
// to the transformed response scale along with Y).
Dataset code_dataset(const Dataset& raw, bool log_response);

// the given rows (in the given order), with hole ids, censoring marks, and
// the coding carried along
Dataset select_rows(const Dataset& d, const std::vector<int>& rows);

// --- assay CSV ---

struct CsvSchema {
  std::string hole_id = "hole_id";
  std::vector<std::string> coords = {"x", "y", "z"};
  std::string value = "value";
  std::string censored = "censored";              // optional column
  std::string detection_limit = "detection_limit";  // required when censored
};

// Raw-scale dataset from a headed CSV. Rows with blank coordinate cells are
// rejected: their "line N: ..." messages go to *rejected when supplied,
// otherwise any rejection throws. Structural problems (missing columns,
// non-numeric cells, censored rows without a limit) always throw with
// line/column diagnostics.
Dataset load_assay_csv(const std::string& path, const CsvSchema& schema = {},
                       std::vector<std::string>* rejected = nullptr);

// Inverse of load_assay_csv on the dataset's current scale. `imputed` adds a
// provenance column marking records whose values were filled in.
void save_assay_csv(const Dataset& d, const std::string& path,
                    const std::vector<std::uint8_t>* imputed = nullptr);

// --- synthetic data ---

struct Synthetic1d {
  Dataset data;            // inputs already on [0,1]; identity coding
  Eigen::VectorXd latent;  // f(x_i) before noise
  double offset = 2.0;     // f(x) = offset + 2 sin(4 pi x)

  double truth(double x) const;
};

// f(x) = offset + 2 sin(4 pi x) + N(0, noise_var) at n uniform-random inputs;
// offset 2 is the fitting toy, offset 0 the censoring toy. When a threshold
// is given, responses below it are recorded at the threshold and flagged.
Synthetic1d gen_synthetic_1d(int n, double noise_var, std::optional<double> threshold,
                             RngStream& rng, double offset = 2.0);

// Borehole-structured field: random collars in the box, near-vertical
// trajectories with small random inclination, equally spaced samples along
// each hole, responses drawn from the gp_truth prior by sequential
// nearest-neighbor conditioning (draw_m predecessors), then left-censored at
// the empirical censor_frac quantile.
Dataset gen_synthetic_boreholes(int n_holes, int pts_per_hole, const Eigen::VectorXd& domain,
                                const Hyperparams& gp_truth, double censor_frac, RngStream& rng,
                                int draw_m = 20);

// --- misc ---

// shortest decimal text that round-trips a double (%.17g)
std::string fmt_g17(double v);

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 0xcbf29ce484222325ull);

// 16-hex-digit digest over sizes, coordinates, responses, hole ids, and
// censoring marks; stable across runs, used to pair fits with their data
std::string dataset_fingerprint(const Dataset& d);

}  // namespace minegp
