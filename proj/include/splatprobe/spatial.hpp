#pragma once

#include "splatprobe/common.hpp"

#include <span>
#include <vector>

namespace splatprobe {

/// Static 3-d tree for nearest-neighbour queries on point clouds.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  /// Indices of the k nearest points (ascending distance), optionally skipping `exclude`.
  std::vector<std::size_t> knn(const Vec3& query, std::size_t k, std::size_t exclude = static_cast<std::size_t>(-1)) const;
  /// Distance to the nearest point.
  double nearest_distance(const Vec3& query) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // leaf range in order_
    int axis;                // -1 for leaves
    double split;
    std::size_t left, right;
  };
  std::size_t build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Mean distance from each point to its k nearest neighbours (itself excluded).
std::vector<double> mean_knn_distance(std::span<const Vec3> points, std::size_t k, int threads = 1);

}  // namespace splatprobe
