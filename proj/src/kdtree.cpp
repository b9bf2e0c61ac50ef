#include "vislio/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace vislio {

namespace {

constexpr int kLeafSize = 8;

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.dist_sq < b.dist_sq || (a.dist_sq == b.dist_sq && a.id < b.id);
}

}  // namespace

KdTree::KdTree(PointCloud points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  const int idx = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, -1, 0.0});
  if (end - begin <= kLeafSize) {
    return idx;
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    const Vec3& p = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) {
    return idx;  // all points coincide
  }
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     return points_[static_cast<std::size_t>(a)][axis] <
                            points_[static_cast<std::size_t>(b)][axis];
                   });
  const double split = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& n = nodes_[static_cast<std::size_t>(idx)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return idx;
}

void KdTree::search(int node, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int id = order_[static_cast<std::size_t>(i)];
      const Neighbor cand{id, (points_[static_cast<std::size_t>(id)] - q).squaredNorm()};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  // Left holds coordinates <= split, right >= split.
  const double diff = q[n.axis] - n.split;
  const int first = diff <= 0.0 ? n.left : n.right;
  const int second = diff <= 0.0 ? n.right : n.left;
  search(first, q, k, heap);
  // Non-strict comparison keeps equidistant candidates reachable for the id tie-break.
  if (heap.size() < k || diff * diff <= heap.front().dist_sq) {
    search(second, q, k, heap);
  }
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, int k) const {
  std::vector<Neighbor> heap;
  if (points_.empty() || k <= 0) {
    return heap;
  }
  heap.reserve(static_cast<std::size_t>(k));
  search(0, q, static_cast<std::size_t>(k), heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

Neighbor KdTree::nearest(const Vec3& q) const {
  const auto nn = knn(q, 1);
  return nn.empty() ? Neighbor{} : nn.front();
}

}  // namespace vislio
