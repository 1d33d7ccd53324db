#include "minegp/spatial.hpp"

#include "minegp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace minegp {

namespace {

inline double dist2(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

}  // namespace

SpatialIndex::SpatialIndex(const Eigen::MatrixXd& X, int leaf_size)
    : n_(static_cast<int>(X.rows())), d_(static_cast<int>(X.cols())), leaf_size_(std::max(1, leaf_size)) {
  pts_.resize(static_cast<size_t>(n_) * d_);
  for (int i = 0; i < n_; ++i)
    for (int k = 0; k < d_; ++k) pts_[static_cast<size_t>(i) * d_ + k] = X(i, k);
  perm_.resize(n_);
  for (int i = 0; i < n_; ++i) perm_[i] = i;
  if (n_ > 0) {
    nodes_.reserve(static_cast<size_t>(2 * n_ / leaf_size_ + 4));
    build(0, n_);
  }
}

int SpatialIndex::build(int lo, int hi) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  {
    Node& nd = nodes_[id];
    nd.lo = lo;
    nd.hi = hi;
    nd.box_lo.assign(d_, std::numeric_limits<double>::infinity());
    nd.box_hi.assign(d_, -std::numeric_limits<double>::infinity());
    for (int i = lo; i < hi; ++i) {
      const double* p = &pts_[static_cast<size_t>(perm_[i]) * d_];
      for (int k = 0; k < d_; ++k) {
        nd.box_lo[k] = std::min(nd.box_lo[k], p[k]);
        nd.box_hi[k] = std::max(nd.box_hi[k], p[k]);
      }
    }
  }
  if (hi - lo <= leaf_size_) return id;

  int axis = 0;
  double widest = -1.0;
  for (int k = 0; k < d_; ++k) {
    const double w = nodes_[id].box_hi[k] - nodes_[id].box_lo[k];
    if (w > widest) {
      widest = w;
      axis = k;
    }
  }
  if (widest <= 0.0) return id;  // all points identical: keep as leaf

  const int mid = lo + (hi - lo) / 2;
  const std::vector<double>& pts = pts_;
  const int d = d_;
  std::nth_element(perm_.begin() + lo, perm_.begin() + mid, perm_.begin() + hi,
                   [&pts, d, axis](int a, int b) {
                     const double ca = pts[static_cast<size_t>(a) * d + axis];
                     const double cb = pts[static_cast<size_t>(b) * d + axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(lo, mid);
  const int right = build(mid, hi);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double SpatialIndex::box_dist2(const Node& nd, const double* x) const {
  double s = 0.0;
  for (int k = 0; k < d_; ++k) {
    double diff = 0.0;
    if (x[k] < nd.box_lo[k])
      diff = nd.box_lo[k] - x[k];
    else if (x[k] > nd.box_hi[k])
      diff = x[k] - nd.box_hi[k];
    s += diff * diff;
  }
  return s;
}

// bounded max-"heap" over (dist2, index): worst candidate at the top so it can
// be displaced; a plain sorted vector would be O(m) per insert
struct SpatialIndex::KnnHeap {
  int cap;
  std::vector<std::pair<double, int>> h;  // max-heap by (dist2, index)

  explicit KnnHeap(int m) : cap(m) { h.reserve(m); }

  static bool worse(const std::pair<double, int>& a, const std::pair<double, int>& b) {
    return a.first < b.first || (a.first == b.first && a.second < b.second);
  }
  bool full() const { return static_cast<int>(h.size()) >= cap; }
  double worst() const { return h.front().first; }

  void offer(double d2, int idx) {
    if (!full()) {
      h.emplace_back(d2, idx);
      std::push_heap(h.begin(), h.end(), worse);
    } else if (worse({d2, idx}, h.front())) {
      std::pop_heap(h.begin(), h.end(), worse);
      h.back() = {d2, idx};
      std::push_heap(h.begin(), h.end(), worse);
    }
  }
};

void SpatialIndex::knn_walk(int node, const double* x, KnnHeap& heap) const {
  const Node& nd = nodes_[node];
  if (nd.left < 0) {
    for (int i = nd.lo; i < nd.hi; ++i) {
      const int idx = perm_[i];
      heap.offer(dist2(x, &pts_[static_cast<size_t>(idx) * d_], d_), idx);
    }
    return;
  }
  const double dl = box_dist2(nodes_[nd.left], x);
  const double dr = box_dist2(nodes_[nd.right], x);
  const int first = dl <= dr ? nd.left : nd.right;
  const int second = dl <= dr ? nd.right : nd.left;
  const double dfirst = std::min(dl, dr);
  const double dsecond = std::max(dl, dr);
  // prune only on strict excess: a box at exactly the current worst distance
  // may still hold an equal-distance point with a lower index
  if (!heap.full() || dfirst <= heap.worst()) knn_walk(first, x, heap);
  if (!heap.full() || dsecond <= heap.worst()) knn_walk(second, x, heap);
}

std::vector<int> SpatialIndex::knn(const Eigen::Ref<const Eigen::VectorXd>& x, int m) const {
  if (m <= 0 || n_ == 0) return {};
  m = std::min(m, n_);
  if (static_cast<int>(x.size()) != d_) throw std::invalid_argument("knn: query dimension mismatch");
  Eigen::VectorXd xc = x;  // contiguous copy
  KnnHeap heap(m);
  knn_walk(0, xc.data(), heap);
  std::sort(heap.h.begin(), heap.h.end());
  std::vector<int> out(heap.h.size());
  for (size_t i = 0; i < heap.h.size(); ++i) out[i] = heap.h[i].second;
  return out;
}

void SpatialIndex::radius_walk(int node, const double* x, double r2,
                               std::vector<std::pair<double, int>>& out) const {
  const Node& nd = nodes_[node];
  if (box_dist2(nd, x) > r2) return;
  if (nd.left < 0) {
    for (int i = nd.lo; i < nd.hi; ++i) {
      const int idx = perm_[i];
      const double d2 = dist2(x, &pts_[static_cast<size_t>(idx) * d_], d_);
      if (d2 <= r2) out.emplace_back(d2, idx);
    }
    return;
  }
  radius_walk(nd.left, x, r2, out);
  radius_walk(nd.right, x, r2, out);
}

std::vector<int> SpatialIndex::within_radius(const Eigen::Ref<const Eigen::VectorXd>& x, double r) const {
  if (n_ == 0 || r < 0.0) return {};
  if (static_cast<int>(x.size()) != d_) throw std::invalid_argument("within_radius: query dimension mismatch");
  Eigen::VectorXd xc = x;
  std::vector<std::pair<double, int>> found;
  radius_walk(0, xc.data(), r * r, found);
  std::sort(found.begin(), found.end());
  std::vector<int> out(found.size());
  for (size_t i = 0; i < found.size(); ++i) out[i] = found[i].second;
  return out;
}

Neighborhood nn_search(const SpatialIndex& idx, const Eigen::VectorXd& x, int m) {
  if (m > idx.size()) throw std::invalid_argument("nn_search: m exceeds the number of points");
  Neighborhood nb;
  nb.indices = idx.knn(x, m);
  nb.method = NeighborhoodMethod::NN;
  nb.center = x;
  return nb;
}

Neighborhood alc_select_pool(const Eigen::MatrixXd& X, const std::vector<int>& pool,
                             const Eigen::VectorXd& x, int m, int n0, int cand_limit,
                             const Hyperparams& phi) {
  const int d = static_cast<int>(X.cols());
  const int npool = static_cast<int>(pool.size());
  if (n0 < 1) throw std::invalid_argument("alc_select: n0 must be at least 1");
  if (m <= n0) throw std::invalid_argument("alc_select: m must exceed the seed size n0");
  if (npool < m) throw std::invalid_argument("alc_select: candidate pool smaller than m");
  if (cand_limit < 1) throw std::invalid_argument("alc_select: cand_limit must be positive");
  phi.kernel.validate(d);

  const Kernel& kern = phi.kernel;
  const double ge = std::max(phi.g, 1e-8);  // keep the seed factorization well posed

  // row-major copies of the pool points and the site
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> P(npool, d);
  for (int j = 0; j < npool; ++j) P.row(j) = X.row(pool[j]);
  Eigen::VectorXd xc = x;

  // correlations pool -> x
  Eigen::VectorXd kpx(npool);
  for (int j = 0; j < npool; ++j) kpx[j] = detail::corr(kern, P.row(j).data(), xc.data(), d);

  // seed with the n0 nearest (pool is sorted by distance)
  Eigen::MatrixXd Ainv = Eigen::MatrixXd::Zero(m, m);
  {
    Eigen::MatrixXd A0(n0, n0);
    for (int i = 0; i < n0; ++i) {
      A0(i, i) = 1.0 + ge;
      for (int j = i + 1; j < n0; ++j) {
        const double c = detail::corr(kern, P.row(i).data(), P.row(j).data(), d);
        A0(i, j) = c;
        A0(j, i) = c;
      }
    }
    Ainv.topLeftCorner(n0, n0) = A0.llt().solve(Eigen::MatrixXd::Identity(n0, n0));
  }

  Eigen::VectorXd kSx(m);
  kSx.head(n0) = kpx.head(n0);
  Eigen::VectorXd w(m);
  w.head(n0) = Ainv.topLeftCorner(n0, n0) * kSx.head(n0);

  // per-candidate state: a_j = corr(chosen, cand j) grows a row per step
  Eigen::MatrixXd Acand(m, npool);
  std::vector<char> live(npool, 0);
  for (int j = n0; j < npool; ++j) live[j] = 1;
  Eigen::VectorXd e(npool), s(npool);
  for (int j = n0; j < npool; ++j) {
    for (int i = 0; i < n0; ++i)
      Acand(i, j) = detail::corr(kern, P.row(i).data(), P.row(j).data(), d);
    const auto aj = Acand.col(j).head(n0);
    e[j] = aj.dot(w.head(n0));
    s[j] = aj.dot(Ainv.topLeftCorner(n0, n0) * aj);
  }

  std::vector<int> chosen(pool.begin(), pool.begin() + n0);
  chosen.reserve(m);
  Eigen::VectorXd z(m), gamma(npool);

  int sz = n0;
  while (sz < m) {
    // best variance reduction among the cand_limit nearest unchosen points
    int best = -1, inspected = 0;
    double best_red = -1.0;
    for (int j = 0; j < npool && inspected < cand_limit; ++j) {
      if (!live[j]) continue;
      ++inspected;
      const double denom = (1.0 + ge) - s[j];
      if (denom <= 1e-12) continue;  // numerically degenerate candidate
      const double b = kpx[j] - e[j];
      const double red = b * b / denom;
      if (red > best_red) {
        best_red = red;
        best = j;
      }
    }
    if (best < 0) break;  // every inspected candidate was degenerate

    const auto aq = Acand.col(best).head(sz);
    z.head(sz).noalias() = Ainv.topLeftCorner(sz, sz).selfadjointView<Eigen::Lower>() * aq;
    const double mu = (1.0 + ge) - aq.dot(z.head(sz));
    const double bx = kpx[best] - e[best];

    // extend Ainv by the partitioned-inverse identity
    Ainv.topLeftCorner(sz, sz).noalias() += z.head(sz) * z.head(sz).transpose() / mu;
    Ainv.col(sz).head(sz) = -z.head(sz) / mu;
    Ainv.row(sz).head(sz) = Ainv.col(sz).head(sz).transpose();
    Ainv(sz, sz) = 1.0 / mu;

    w.head(sz) -= z.head(sz) * (bx / mu);
    w[sz] = bx / mu;
    kSx[sz] = kpx[best];

    const double* pq = P.row(best).data();
    for (int j = 0; j < npool; ++j) {
      if (!live[j]) continue;
      const double c = detail::corr(kern, pq, P.row(j).data(), d);
      const double gj = c - z.head(sz).dot(Acand.col(j).head(sz));
      e[j] += bx * gj / mu;
      s[j] += gj * gj / mu;
      Acand(sz, j) = c;
    }

    live[best] = 0;
    chosen.push_back(pool[best]);
    ++sz;
  }

  Neighborhood nb;
  nb.indices = std::move(chosen);
  nb.method = NeighborhoodMethod::ALC;
  nb.center = x;
  return nb;
}

Neighborhood alc_select(const Eigen::MatrixXd& X, const SpatialIndex& idx,
                        const Eigen::VectorXd& x, int m, int n0, int cand_limit,
                        const Hyperparams& phi) {
  if (m > idx.size()) throw std::invalid_argument("alc_select: m exceeds the number of points");
  const int want = std::min(idx.size(), m + cand_limit);
  std::vector<int> pool = idx.knn(x, want);
  return alc_select_pool(X, pool, x, m, n0, cand_limit, phi);
}

std::vector<int> maximin_order(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  std::vector<int> order;
  if (n == 0) return order;
  order.reserve(n);

  // column-major coordinate arrays stream well in the per-step update
  const Eigen::MatrixXd& C = X;
  const Eigen::RowVectorXd centroid = X.colwise().mean();

  Eigen::ArrayXd dmin(n);
  {
    int first = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d2 = (C.row(i) - centroid).squaredNorm();
      if (d2 > best) {
        best = d2;
        first = i;
      }
    }
    order.push_back(first);
    dmin.setConstant(std::numeric_limits<double>::infinity());
    dmin[first] = -1.0;  // selected sentinel
  }

  for (int step = 1; step < n; ++step) {
    const int last = order.back();
    int next = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      double di = dmin[i];
      if (di < 0.0) continue;
      double d2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = C(i, k) - C(last, k);
        d2 += diff * diff;
      }
      if (d2 < di) di = d2;
      dmin[i] = di;
      if (di > best) {
        best = di;
        next = i;
      }
    }
    order.push_back(next);
    dmin[next] = -1.0;
  }
  return order;
}

Eigen::MatrixXd prescale_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& theta) {
  const int d = static_cast<int>(X.cols());
  if (theta.size() != 1 && static_cast<int>(theta.size()) != d)
    throw std::invalid_argument("prescale_inputs: theta must have size 1 or d");
  if ((theta.array() <= 0.0).any())
    throw std::invalid_argument("prescale_inputs: lengthscales must be positive");
  Eigen::MatrixXd out = X;
  for (int k = 0; k < d; ++k) {
    const double th = theta.size() == 1 ? theta[0] : theta[k];
    out.col(k) /= std::sqrt(th);
  }
  return out;
}

GlobalScales estimate_global_lengthscales(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          int n_blocks, int block_size, const Kernel& proto,
                                          RngStream& rng) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n_blocks < 1 || block_size < 2) throw std::invalid_argument("estimate_global_lengthscales: bad block layout");
  block_size = std::min(block_size, n);
  n_blocks = std::min(n_blocks, std::max(1, n / block_size));

  std::vector<int> rows = rng.sample_without_replacement(n, n_blocks * block_size);

  std::vector<Eigen::VectorXd> thetas;
  std::vector<double> gs;
  for (int b = 0; b < n_blocks; ++b) {
    Eigen::MatrixXd Xb(block_size, d);
    Eigen::VectorXd yb(block_size);
    for (int i = 0; i < block_size; ++i) {
      const int r = rows[b * block_size + i];
      Xb.row(i) = X.row(r);
      yb[i] = y[r];
    }
    try {
      GpOptions opt;
      opt.kernel = proto;
      opt.kernel.theta.resize(0);  // ARD initialization from the block
      GPFit fit = fit_mle(Xb, yb, opt);
      Eigen::VectorXd th = fit.phi.kernel.theta;
      if (th.size() == 1) th = Eigen::VectorXd::Constant(d, th[0]);
      thetas.push_back(th);
      gs.push_back(fit.phi.g);
    } catch (const std::exception&) {
      // a degenerate block is skipped, not fatal
    }
  }
  if (thetas.empty())
    throw std::runtime_error("estimate_global_lengthscales: every block fit failed");

  GlobalScales out;
  out.n_blocks_used = static_cast<int>(thetas.size());
  Eigen::ArrayXd logsum = Eigen::ArrayXd::Zero(d);
  for (const auto& th : thetas) logsum += th.array().log();
  out.theta = (logsum / out.n_blocks_used).exp().matrix();

  std::sort(gs.begin(), gs.end());
  const size_t k = gs.size();
  out.g = (k % 2 == 1) ? gs[k / 2] : 0.5 * (gs[k / 2 - 1] + gs[k / 2]);
  return out;
}

IncrementalNN::IncrementalNN(int dim, int expected, int buffer_cap)
    : d_(dim), buffer_cap_(std::max(1, buffer_cap)) {
  pts_.resize(std::max(expected, buffer_cap_), d_);
}

void IncrementalNN::add(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<int>(x.size()) != d_) throw std::invalid_argument("IncrementalNN: dimension mismatch");
  if (n_ == static_cast<int>(pts_.rows())) {
    Eigen::MatrixXd bigger(std::max(2 * n_, buffer_cap_), d_);
    bigger.topRows(n_) = pts_.topRows(n_);
    pts_.swap(bigger);
  }
  pts_.row(n_) = x.transpose();
  ++n_;
  if (n_ - tree_n_ >= buffer_cap_) {
    tree_ = SpatialIndex(pts_.topRows(n_));
    tree_n_ = n_;
  }
}

std::vector<int> IncrementalNN::knn(const Eigen::Ref<const Eigen::VectorXd>& x, int k) const {
  if (k <= 0 || n_ == 0) return {};
  k = std::min(k, n_);
  std::vector<std::pair<double, int>> cand;
  cand.reserve(static_cast<size_t>(k) + (n_ - tree_n_));
  if (tree_n_ > 0)
    for (int idx : tree_.knn(x, std::min(k, tree_n_))) cand.emplace_back((pts_.row(idx).transpose() - x).squaredNorm(), idx);
  for (int i = tree_n_; i < n_; ++i) cand.emplace_back((pts_.row(i).transpose() - x).squaredNorm(), i);
  std::sort(cand.begin(), cand.end());
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = cand[i].second;
  return out;
}

}  // namespace minegp
