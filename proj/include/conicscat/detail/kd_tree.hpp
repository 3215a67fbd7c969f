#pragma once

// Minimal static k-d tree over row-major points for nearest-neighbour queries.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace conicscat::detail {

class KdTree {
 public:
  KdTree() = default;
  KdTree(std::vector<double> points, std::size_t dim)
      : dim_(dim), points_(std::move(points)) {
    const std::size_t count = dim_ ? points_.size() / dim_ : 0;
    index_.resize(count);
    std::iota(index_.begin(), index_.end(), std::size_t{0});
    nodes_.reserve(count);
    root_ = build(0, count, 0);
  }

  std::size_t size() const { return index_.size(); }
  const double* point(std::size_t i) const { return &points_[i * dim_]; }

  /// Index of the nearest stored point and its squared distance.
  std::pair<std::size_t, double> nearest(const double* q) const {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return {best, best_d2};
  }

 private:
  struct Node {
    std::size_t point;
    std::size_t axis;
    int left = -1, right = -1;
  };

  int build(std::size_t lo, std::size_t hi, std::size_t depth) {
    if (lo >= hi) return -1;
    const std::size_t axis = depth % dim_;
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(index_.begin() + lo, index_.begin() + mid, index_.begin() + hi,
                     [&](std::size_t a, std::size_t b) {
                       return points_[a * dim_ + axis] < points_[b * dim_ + axis];
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{index_[mid], axis});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int id, const double* q, std::size_t& best, double& best_d2) const {
    if (id < 0) return;
    const Node& node = nodes_[id];
    const double* p = point(node.point);
    double d2 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) d2 += (p[k] - q[k]) * (p[k] - q[k]);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = node.point;
    }
    const double diff = q[node.axis] - p[node.axis];
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    search(near, q, best, best_d2);
    if (diff * diff < best_d2) search(far, q, best, best_d2);
  }

  std::size_t dim_ = 0;
  std::vector<double> points_;
  std::vector<std::size_t> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace conicscat::detail
