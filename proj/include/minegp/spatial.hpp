#pragma once

#include <Eigen/Dense>
#include <vector>

#include "minegp/kernel.hpp"
#include "minegp/rng.hpp"

namespace minegp {

// Balanced k-d tree over a fixed point set. Queries are exact and
// deterministic: distance ties are broken by the lower point index.
class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(const Eigen::MatrixXd& X, int leaf_size = 16);

  int size() const { return n_; }
  int dim() const { return d_; }

  std::vector<int> knn(const Eigen::Ref<const Eigen::VectorXd>& x, int m) const;
  std::vector<int> within_radius(const Eigen::Ref<const Eigen::VectorXd>& x, double r) const;

 private:
  struct Node {
    int lo = 0, hi = 0;        // range into perm_
    int left = -1, right = -1; // children; leaf when left < 0
    std::vector<double> box_lo, box_hi;
  };

  int n_ = 0, d_ = 0, leaf_size_ = 16;
  std::vector<double> pts_;  // row-major copies
  std::vector<int> perm_;
  std::vector<Node> nodes_;

  int build(int lo, int hi);
  double box_dist2(const Node& nd, const double* x) const;

  struct KnnHeap;
  void knn_walk(int node, const double* x, KnnHeap& heap) const;
  void radius_walk(int node, const double* x, double r2, std::vector<std::pair<double, int>>& out) const;
};

enum class NeighborhoodMethod { NN, ALC };

struct Neighborhood {
  std::vector<int> indices;  // unique rows of the training set
  NeighborhoodMethod method = NeighborhoodMethod::NN;
  Eigen::VectorXd center;
};

// m nearest training points; throws if m > n.
Neighborhood nn_search(const SpatialIndex& idx, const Eigen::VectorXd& x, int m);

// Greedy neighborhood minimizing the posterior variance at x: seeded with the
// n0 nearest points, then repeatedly appends the candidate giving the largest
// variance reduction at x, considering at each step the cand_limit nearest
// not-yet-chosen points. Depends on X and phi only, never on responses.
// Rank-one partitioned-inverse updates keep each step at O(m * candidates).
Neighborhood alc_select(const Eigen::MatrixXd& X, const SpatialIndex& idx,
                        const Eigen::VectorXd& x, int m, int n0, int cand_limit,
                        const Hyperparams& phi);

// Same greedy scheme on a caller-supplied candidate pool (sorted by distance
// to x); used where the training set grows incrementally.
Neighborhood alc_select_pool(const Eigen::MatrixXd& X, const std::vector<int>& pool,
                             const Eigen::VectorXd& x, int m, int n0, int cand_limit,
                             const Hyperparams& phi);

// Greedy maximin ordering: first the point farthest from the centroid, then
// each next point maximizes the minimum distance to all ordered points.
// Ties break toward the lower index.
std::vector<int> maximin_order(const Eigen::MatrixXd& X);

// column k divided by sqrt(theta_k); theta of size 1 broadcasts
Eigen::MatrixXd prescale_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& theta);

struct GlobalScales {
  Eigen::VectorXd theta;  // per-coordinate geometric mean over block MLEs
  double g = 0.0;         // median over block MLEs
  int n_blocks_used = 0;
};

// ARD MLEs on random disjoint subsets; failed block fits are skipped.
GlobalScales estimate_global_lengthscales(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          int n_blocks, int block_size, const Kernel& proto,
                                          RngStream& rng);

// Exact nearest-neighbor queries against a point set that grows one point at
// a time (predecessor conditioning). A k-d tree over the stable prefix plus a
// small linear buffer; the tree is rebuilt when the buffer fills.
class IncrementalNN {
 public:
  explicit IncrementalNN(int dim, int expected = 0, int buffer_cap = 256);

  int size() const { return n_; }
  void add(const Eigen::Ref<const Eigen::VectorXd>& x);
  // k nearest among previously added points, sorted by (distance, index)
  std::vector<int> knn(const Eigen::Ref<const Eigen::VectorXd>& x, int k) const;

 private:
  int d_ = 0, n_ = 0, tree_n_ = 0, buffer_cap_ = 256;
  Eigen::MatrixXd pts_;
  SpatialIndex tree_;
};

}  // namespace minegp
