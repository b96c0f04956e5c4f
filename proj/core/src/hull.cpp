#include "langsurf/hull.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "langsurf/error.hpp"

namespace langsurf {
namespace {

struct Face {
  std::array<int, 3> v;
  Vec3 n;
  double d = 0;
  std::vector<int> outside;
  bool alive = true;
};

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

double scale_of(std::span<const Vec3> pts, std::span<const int> idx) {
  Vec3 lo = pts[idx[0]], hi = pts[idx[0]];
  for (int i : idx) {
    lo = lo.cwiseMin(pts[i]);
    hi = hi.cwiseMax(pts[i]);
  }
  return std::max(1.0, (hi - lo).norm());
}

struct Simplex {
  int rank = 0;
  std::array<int, 4> v{};
};

// Initial tetrahedron from the axis extremes, or the affine rank if none.
Simplex initial_simplex(std::span<const Vec3> pts, std::span<const int> idx, double eps) {
  std::vector<int> ext;
  for (int axis = 0; axis < 3; ++axis) {
    int lo = idx[0], hi = idx[0];
    for (int i : idx) {
      if (pts[i][axis] < pts[lo][axis]) lo = i;
      if (pts[i][axis] > pts[hi][axis]) hi = i;
    }
    ext.push_back(lo);
    ext.push_back(hi);
  }
  Simplex s;
  double best = -1;
  for (std::size_t a = 0; a < ext.size(); ++a) {
    for (std::size_t b = a + 1; b < ext.size(); ++b) {
      const double d = (pts[ext[a]] - pts[ext[b]]).squaredNorm();
      if (d > best) {
        best = d;
        s.v[0] = ext[a];
        s.v[1] = ext[b];
      }
    }
  }
  if (std::sqrt(best) <= eps) return s;
  const Vec3 p0 = pts[s.v[0]];
  const Vec3 dir = (pts[s.v[1]] - p0).normalized();
  best = -1;
  for (int i : idx) {
    const Vec3 r = pts[i] - p0;
    const double d = (r - dir * dir.dot(r)).norm();
    if (d > best) {
      best = d;
      s.v[2] = i;
    }
  }
  if (best <= eps) {
    s.rank = 1;
    return s;
  }
  const Vec3 n = (pts[s.v[1]] - p0).cross(pts[s.v[2]] - p0).normalized();
  best = -1;
  for (int i : idx) {
    const double d = std::abs(n.dot(pts[i] - p0));
    if (d > best) {
      best = d;
      s.v[3] = i;
    }
  }
  s.rank = best <= eps ? 2 : 3;
  return s;
}

class Quickhull {
 public:
  Quickhull(std::span<const Vec3> pts, double eps) : pts_(pts), eps_(eps) {}

  // Returns alive faces as vertex-index triples into pts.
  std::vector<std::array<int, 3>> run(std::span<const int> idx, const Simplex& s) {
    Vec3 centroid = Vec3::Zero();
    for (int v : s.v) centroid += pts_[v];
    centroid /= 4.0;
    const std::array<std::array<int, 3>, 4> tris = {{{s.v[0], s.v[1], s.v[2]},
                                                     {s.v[0], s.v[1], s.v[3]},
                                                     {s.v[0], s.v[2], s.v[3]},
                                                     {s.v[1], s.v[2], s.v[3]}}};
    std::vector<int> fresh;
    for (auto t : tris) {
      const Vec3 n = (pts_[t[1]] - pts_[t[0]]).cross(pts_[t[2]] - pts_[t[0]]);
      if (n.dot(centroid - pts_[t[0]]) > 0) std::swap(t[1], t[2]);
      fresh.push_back(add_face(t));
    }
    std::vector<int> rest;
    for (int i : idx) {
      if (std::find(s.v.begin(), s.v.end(), i) == s.v.end()) rest.push_back(i);
    }
    assign(rest, fresh);

    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!faces_[f].alive || faces_[f].outside.empty()) continue;
      expand(static_cast<int>(f));
    }
    std::vector<std::array<int, 3>> out;
    for (const auto& f : faces_) {
      if (f.alive) out.push_back(f.v);
    }
    return out;
  }

 private:
  int add_face(const std::array<int, 3>& v) {
    Face f;
    f.v = v;
    f.n = (pts_[v[1]] - pts_[v[0]]).cross(pts_[v[2]] - pts_[v[0]]);
    const double len = f.n.norm();
    if (len > 0) f.n /= len;
    f.d = f.n.dot(pts_[v[0]]);
    const int id = static_cast<int>(faces_.size());
    for (int e = 0; e < 3; ++e) edges_[edge_key(v[e], v[(e + 1) % 3])] = id;
    faces_.push_back(std::move(f));
    return id;
  }

  double dist(int f, int p) const { return faces_[f].n.dot(pts_[p]) - faces_[f].d; }

  // Each point goes to the new face it is farthest outside of.
  void assign(const std::vector<int>& points, const std::vector<int>& targets) {
    for (int p : points) {
      int best = -1;
      double best_d = eps_;
      for (int f : targets) {
        const double d = dist(f, p);
        if (d > best_d) {
          best_d = d;
          best = f;
        }
      }
      if (best >= 0) faces_[best].outside.push_back(p);
    }
  }

  void expand(int start) {
    // Loop until this face and its replacements have no outside points.
    std::vector<int> queue = {start};
    while (!queue.empty()) {
      const int f0 = queue.back();
      queue.pop_back();
      if (!faces_[f0].alive || faces_[f0].outside.empty()) continue;
      int eye = faces_[f0].outside.front();
      double far = dist(f0, eye);
      for (int p : faces_[f0].outside) {
        const double d = dist(f0, p);
        if (d > far || (d == far && p < eye)) {
          far = d;
          eye = p;
        }
      }
      // Visible region by flood fill across shared edges.
      std::vector<int> visible = {f0};
      std::vector<char> seen(faces_.size(), 0);
      seen[f0] = 1;
      std::vector<std::pair<int, int>> horizon;
      for (std::size_t k = 0; k < visible.size(); ++k) {
        const auto v = faces_[visible[k]].v;
        for (int e = 0; e < 3; ++e) {
          const int a = v[e], b = v[(e + 1) % 3];
          const int g = edges_.at(edge_key(b, a));
          if (seen[g] == 1) continue;
          if (seen[g] == 2) {
            horizon.emplace_back(a, b);
            continue;
          }
          if (dist(g, eye) > eps_) {
            seen[g] = 1;
            visible.push_back(g);
          } else {
            seen[g] = 2;
            horizon.emplace_back(a, b);
          }
        }
      }
      std::vector<int> orphans;
      for (int g : visible) {
        auto& face = faces_[g];
        face.alive = false;
        for (int p : face.outside) {
          if (p != eye) orphans.push_back(p);
        }
        face.outside.clear();
        for (int e = 0; e < 3; ++e) {
          auto it = edges_.find(edge_key(face.v[e], face.v[(e + 1) % 3]));
          if (it != edges_.end() && it->second == g) edges_.erase(it);
        }
      }
      std::vector<int> fresh;
      for (auto [a, b] : horizon) fresh.push_back(add_face({a, b, eye}));
      assign(orphans, fresh);
      for (int g : fresh) {
        if (!faces_[g].outside.empty()) queue.push_back(g);
      }
    }
  }

  std::span<const Vec3> pts_;
  double eps_;
  std::vector<Face> faces_;
  std::unordered_map<std::uint64_t, int> edges_;
};

ConvexHull finish(std::span<const Vec3> pts, const std::vector<std::array<int, 3>>& tris) {
  ConvexHull hull;
  std::vector<int> remap(pts.size(), -1);
  for (const auto& t : tris) {
    std::array<int, 3> f{};
    for (int k = 0; k < 3; ++k) {
      int& r = remap[t[k]];
      if (r < 0) {
        r = static_cast<int>(hull.vertices.size());
        hull.vertices.push_back(pts[t[k]]);
      }
      f[k] = r;
    }
    hull.faces.push_back(f);
  }
  for (const auto& f : hull.faces) {
    const Vec3& a = hull.vertices[f[0]];
    Vec3 n = (hull.vertices[f[1]] - a).cross(hull.vertices[f[2]] - a);
    n.normalize();
    hull.normals.push_back(n);
    hull.offsets.push_back(n.dot(a));
  }
  return hull;
}

}  // namespace

int affine_rank(std::span<const Vec3> points, double tol) {
  if (points.empty()) return 0;
  std::vector<int> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  return initial_simplex(points, idx, tol * scale_of(points, idx)).rank;
}

ConvexHull build_hull(std::span<const Vec3> points) {
  for (const auto& p : points) {
    if (!p.allFinite()) throw InvalidParameter("build_hull: non-finite point");
  }
  if (points.size() < 4) {
    const int rank = affine_rank(points);
    throw DegenerateHullError("build_hull: need at least 4 points, got " + std::to_string(points.size()), rank);
  }
  std::vector<int> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  const double eps = 1e-10 * scale_of(points, idx);
  const Simplex simplex = initial_simplex(points, idx, eps);
  if (simplex.rank < 3) {
    throw DegenerateHullError("build_hull: points span only " + std::to_string(simplex.rank) + " dimension(s)",
                              simplex.rank);
  }

  // Akl-Toussaint: drop points strictly inside the hull of the extremes.
  std::vector<int> extremes(simplex.v.begin(), simplex.v.end());
  for (int axis = 0; axis < 3; ++axis) {
    const auto [lo, hi] = std::minmax_element(idx.begin(), idx.end(), [&](int a, int b) {
      return points[a][axis] < points[b][axis];
    });
    extremes.push_back(*lo);
    extremes.push_back(*hi);
  }
  std::sort(extremes.begin(), extremes.end());
  extremes.erase(std::unique(extremes.begin(), extremes.end()), extremes.end());
  std::vector<int> candidates;
  {
    Quickhull inner(points, eps);
    const auto filter = inner.run(extremes, simplex);
    std::vector<std::pair<Vec3, double>> planes;
    for (const auto& t : filter) {
      const Vec3 n = (points[t[1]] - points[t[0]]).cross(points[t[2]] - points[t[0]]).normalized();
      planes.emplace_back(n, n.dot(points[t[0]]));
    }
    for (int i : idx) {
      bool strictly_inside = true;
      for (const auto& [n, d] : planes) {
        if (n.dot(points[i]) - d > -eps) {
          strictly_inside = false;
          break;
        }
      }
      if (!strictly_inside || std::binary_search(extremes.begin(), extremes.end(), i)) candidates.push_back(i);
    }
  }
  Quickhull qh(points, eps);
  return finish(points, qh.run(candidates, simplex));
}

ConvexHull build_hull_xyz(std::span<const double> xyz) {
  if (xyz.size() % 3) throw ShapeError("build_hull_xyz: expected N x 3 coordinates");
  std::vector<Vec3> pts(xyz.size() / 3);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
  return build_hull(pts);
}

bool contains(const ConvexHull& hull, const Vec3& point, double tol) {
  for (std::size_t f = 0; f < hull.faces.size(); ++f) {
    if (hull.signed_distance(f, point) > tol) return false;
  }
  return true;
}

}  // namespace langsurf
