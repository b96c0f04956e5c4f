#include "langsurf/kdtree.hpp"

#include <algorithm>
#include <stdexcept>

#include "langsurf/error.hpp"

namespace langsurf {
namespace {

constexpr std::uint32_t kLeafSize = 8;

bool closer(const KdTree::Hit& a, const KdTree::Hit& b) {
  if (a.distance_sq != b.distance_sq) return a.distance_sq < b.distance_sq;
  return a.index < b.index;
}

}  // namespace

KdTree::KdTree(std::span<const double> xyz) {
  if (xyz.size() % 3 != 0) throw ShapeError("KdTree: coordinate array length not a multiple of 3");
  points_.reserve(xyz.size() / 3);
  for (std::size_t i = 0; i < xyz.size(); i += 3) points_.emplace_back(xyz[i], xyz[i + 1], xyz[i + 2]);
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()), 0);
}

int KdTree::build(std::uint32_t begin, std::uint32_t end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });
  const double split = points_[order_[mid]][axis];
  nodes_[static_cast<std::size_t>(id)].axis = axis;
  nodes_[static_cast<std::size_t>(id)].split = split;
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = l;
  nodes_[static_cast<std::size_t>(id)].right = r;
  return id;
}

void KdTree::search(int node_id, const Vec3& q, std::size_t k, std::size_t exclude,
                    std::vector<Hit>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.left < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      if (idx == exclude) continue;
      const Hit h{idx, (points_[idx] - q).squaredNorm()};
      if (heap.size() < k) {
        heap.push_back(h);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(h, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = h;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, q, k, exclude, heap);
  // Points equal to the split may sit on either side; <= keeps ties exact.
  if (heap.size() < k || diff * diff <= heap.front().distance_sq) search(far, q, k, exclude, heap);
}

KdTree::Hit KdTree::nearest(const Vec3& q) const {
  if (points_.empty()) throw InvalidParameter("KdTree::nearest on an empty tree");
  return knn(q, 1).front();
}

std::vector<KdTree::Hit> KdTree::knn(const Vec3& q, std::size_t k, std::size_t exclude) const {
  std::vector<Hit> heap;
  if (points_.empty() || k == 0) return heap;
  heap.reserve(k + 1);
  search(0, q, k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<std::uint32_t> knn_graph(std::span<const double> xyz, std::size_t k) {
  const KdTree tree(xyz);
  const std::size_t n = tree.size();
  if (k >= n) throw InvalidParameter("knn_graph: k must be smaller than the point count");
  std::vector<std::uint32_t> graph(n * k);
  for (std::size_t j = 0; j < n; ++j) {
    const auto hits = tree.knn(Vec3(xyz[3 * j], xyz[3 * j + 1], xyz[3 * j + 2]), k, j);
    for (std::size_t m = 0; m < k; ++m) graph[j * k + m] = static_cast<std::uint32_t>(hits[m].index);
  }
  return graph;
}

}  // namespace langsurf
