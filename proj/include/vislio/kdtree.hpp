#pragma once

#include <vector>

#include "vislio/point_cloud.hpp"

namespace vislio {

struct Neighbor {
  int id = -1;
  double dist_sq = 0.0;
};

/// Exact 3-D kd-tree. The tree keeps a copy of the points; queries are
/// read-only and safe to run concurrently.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(PointCloud points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const PointCloud& points() const { return points_; }
  const Vec3& point(int id) const { return points_[static_cast<std::size_t>(id)]; }

  /// The k nearest stored points, closest first; equal distances are ordered
  /// by id. Returns fewer than k when the tree is smaller.
  std::vector<Neighbor> knn(const Vec3& q, int k) const;

  /// Nearest stored point, or id -1 for an empty tree.
  Neighbor nearest(const Vec3& q) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int left = -1;
    int right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const;

  PointCloud points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace vislio
