#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

namespace kacsim {

// Static kd-tree over column points; supports k-th nearest neighbor distance
// queries excluding the query point itself.
class KdTree {
 public:
  explicit KdTree(Eigen::MatrixXd points) : pts_(std::move(points)) {
    const int n = int(pts_.cols());
    index_.resize(n);
    for (int i = 0; i < n; ++i) index_[i] = i;
    nodes_.reserve(2 * std::max(1, n / kLeafSize));
    root_ = build(0, n);
  }

  double kth_neighbor_distance(int query, int k) const {
    std::vector<double> best(k, std::numeric_limits<double>::infinity());
    search(root_, query, best);
    return std::sqrt(best.back());
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    int lo = 0, hi = 0;
    int axis = -1;
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int lo, int hi) {
    Node node;
    node.lo = lo;
    node.hi = hi;
    if (hi - lo > kLeafSize) {
      int axis = 0;
      double spread = -1.0;
      for (int a = 0; a < pts_.rows(); ++a) {
        double mn = pts_(a, index_[lo]), mx = mn;
        for (int i = lo + 1; i < hi; ++i) {
          const double v = pts_(a, index_[i]);
          mn = std::min(mn, v);
          mx = std::max(mx, v);
        }
        if (mx - mn > spread) {
          spread = mx - mn;
          axis = a;
        }
      }
      const int mid = lo + (hi - lo) / 2;
      std::nth_element(index_.begin() + lo, index_.begin() + mid,
                       index_.begin() + hi, [&](int a, int b) {
                         return pts_(axis, a) < pts_(axis, b);
                       });
      node.axis = axis;
      node.split = pts_(axis, index_[mid]);
      const int self = int(nodes_.size());
      nodes_.push_back(node);
      const int l = build(lo, mid);
      const int r = build(mid, hi);
      nodes_[self].left = l;
      nodes_[self].right = r;
      return self;
    }
    nodes_.push_back(node);
    return int(nodes_.size()) - 1;
  }

  // best: squared distances, ascending worst-last.
  void search(int node_id, int query, std::vector<double>& best) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (int i = node.lo; i < node.hi; ++i) {
        const int p = index_[i];
        if (p == query) continue;
        const double d2 = (pts_.col(p) - pts_.col(query)).squaredNorm();
        if (d2 < best.back()) {
          auto it = std::upper_bound(best.begin(), best.end(), d2);
          best.insert(it, d2);
          best.pop_back();
        }
      }
      return;
    }
    const double delta = pts_(node.axis, query) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, query, best);
    if (delta * delta < best.back()) search(far, query, best);
  }

  Eigen::MatrixXd pts_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

}  // namespace kacsim
