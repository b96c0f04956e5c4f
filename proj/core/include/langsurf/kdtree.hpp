#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "langsurf/scene.hpp"

namespace langsurf {

/// Exact 3-d k-d tree over a flat xyz array. Ties in distance resolve to the
/// lower point index, so query results do not depend on tree layout.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const double> xyz);

  std::size_t size() const { return points_.size(); }

  struct Hit {
    std::size_t index;
    double distance_sq;
  };

  /// Nearest point to `q`. Requires a nonempty tree.
  Hit nearest(const Vec3& q) const;

  /// k nearest points sorted by (distance, index); `exclude` is skipped
  /// (pass SIZE_MAX for none).
  std::vector<Hit> knn(const Vec3& q, std::size_t k, std::size_t exclude = SIZE_MAX) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range into order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0;
  };

  int build(std::uint32_t begin, std::uint32_t end, int depth);
  void search(int node, const Vec3& q, std::size_t k, std::size_t exclude, std::vector<Hit>& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// For each point j, its k nearest other points (row-major N x k indices).
std::vector<std::uint32_t> knn_graph(std::span<const double> xyz, std::size_t k);

}  // namespace langsurf
