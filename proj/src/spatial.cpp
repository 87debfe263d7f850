#include "splatprobe/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace splatprobe {

namespace {
constexpr std::size_t kLeafSize = 12;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()), order_(points.size()) {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kLeafSize) return id;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<std::size_t> KdTree::knn(const Vec3& query, std::size_t k, std::size_t exclude) const {
  // Max-heap of (squared distance, index).
  std::priority_queue<std::pair<double, std::size_t>> heap;
  if (nodes_.empty() || k == 0) return {};
  auto visit = [&](auto&& self, std::size_t node_id) -> void {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        const double d2 = (points_[idx] - query).squaredNorm();
        if (heap.size() < k) {
          heap.emplace(d2, idx);
        } else if (std::make_pair(d2, idx) < heap.top()) {
          heap.pop();
          heap.emplace(d2, idx);
        }
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
  };
  visit(visit, 0);
  std::vector<std::size_t> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top().second;
    heap.pop();
  }
  return out;
}

double KdTree::nearest_distance(const Vec3& query) const {
  const auto idx = knn(query, 1);
  if (idx.empty()) return std::numeric_limits<double>::infinity();
  return (points_[idx.front()] - query).norm();
}

std::vector<double> mean_knn_distance(std::span<const Vec3> points, std::size_t k, int threads) {
  const KdTree tree(points);
  std::vector<double> out(points.size(), 0.0);
  parallel_for(points.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto nn = tree.knn(points[i], k, i);
      double sum = 0.0;
      for (std::size_t j : nn) sum += (points[j] - points[i]).norm();
      out[i] = nn.empty() ? 0.0 : sum / static_cast<double>(nn.size());
    }
  });
  return out;
}

}  // namespace splatprobe
