#include "langsurf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "langsurf/error.hpp"
#include "langsurf/hcam.hpp"
#include "langsurf/kdtree.hpp"
#include "langsurf/random.hpp"

namespace langsurf {
namespace {

void require_same(const FloatImage& a, const FloatImage& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                     std::to_string(b.channels));
  }
}

// Pixel indices per mask id, ids 1..max; absent ids give empty lists.
std::vector<std::vector<std::size_t>> mask_members(const LabelImage& masks) {
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(mask_count(masks)));
  for (std::size_t p = 0; p < masks.data.size(); ++p) {
    const auto id = masks.data[p];
    if (id > 0) members[static_cast<std::size_t>(id - 1)].push_back(p);
  }
  return members;
}

Vec3 feature_at(const FloatImage& map, std::size_t p) {
  return {map.data[3 * p], map.data[3 * p + 1], map.data[3 * p + 2]};
}

void require_three_channels(const FloatImage& map, const char* what) {
  if (map.channels != 3) throw ShapeError(std::string(what) + ": expected a 3-channel map");
}

}  // namespace

const std::vector<double>& LossReport::grad(const std::string& key) const {
  auto it = grads.find(key);
  if (it == grads.end()) throw LookupError("loss '" + name + "' has no gradient for '" + key + "'");
  return it->second;
}

LossReport loss_rgb(const FloatImage& rendered, const FloatImage& target) {
  require_same(rendered, target, "loss_rgb");
  LossReport r{"rgb", 0.0, {}};
  auto& g = r.grads["rendered"];
  g.assign(rendered.data.size(), 0.0);
  if (rendered.data.empty()) return r;
  const double inv = 1.0 / static_cast<double>(rendered.data.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    sum += std::abs(d);
    g[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  r.value = sum * inv;
  return r;
}

LossReport loss_flat(const GaussianScene& scene) {
  LossReport r{"flat", 0.0, {}};
  auto& g = r.grads["log_scale"];
  g.assign(scene.log_scale.size(), 0.0);
  const std::size_t n = scene.size();
  if (n == 0) return r;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int axis = min_scale_axis(scene.scale_log(i));
    const double s = std::exp(scene.log_scale[3 * i + static_cast<std::size_t>(axis)]);
    sum += s;
    g[3 * i + static_cast<std::size_t>(axis)] = s / static_cast<double>(n);
  }
  r.value = sum / static_cast<double>(n);
  return r;
}

DepthNormals depth_normals(const RenderOutput& render, const Camera& camera) {
  const int h = render.depth.height, w = render.depth.width;
  DepthNormals out;
  out.normal = FloatImage(h, w, 3);
  out.valid.assign(static_cast<std::size_t>(h) * w, 0);
  auto opaque = [&](int x, int y) { return render.alpha.at(x, y) > 0.5; };
  auto point = [&](int x, int y) {
    const double z = render.depth.at(x, y) / render.alpha.at(x, y);
    return Vec3((x - camera.cx) / camera.fx * z, (y - camera.cy) / camera.fy * z, z);
  };
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!opaque(x, y) || !opaque(x - 1, y) || !opaque(x + 1, y) || !opaque(x, y - 1) || !opaque(x, y + 1)) {
        continue;
      }
      const Vec3 du = point(x + 1, y) - point(x - 1, y);
      const Vec3 dv = point(x, y + 1) - point(x, y - 1);
      Vec3 n = du.cross(dv);
      const double len = n.norm();
      if (!(len > 0)) continue;
      n /= len;
      if (n.dot(point(x, y)) > 0) n = -n;
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < 3; ++c) out.normal.data[3 * p + c] = n[c];
      out.valid[p] = 1;
    }
  }
  return out;
}

LossReport loss_geo(const FloatImage& rendered_normal, const DepthNormals& reference) {
  require_same(rendered_normal, reference.normal, "loss_geo");
  LossReport r{"geo", 0.0, {}};
  auto& g = r.grads["normal"];
  g.assign(rendered_normal.data.size(), 0.0);
  std::size_t count = 0;
  for (auto v : reference.valid) count += v;
  if (count == 0) return r;
  const double inv = 1.0 / static_cast<double>(count);
  double sum = 0.0;
  for (std::size_t p = 0; p < reference.valid.size(); ++p) {
    if (!reference.valid[p]) continue;
    const Vec3 raw = feature_at(rendered_normal, p);
    const Vec3 nd = feature_at(reference.normal, p);
    const double len = raw.norm();
    if (!(len > 1e-12)) {
      sum += 1.0;  // no rendered normal: treat as orthogonal
      continue;
    }
    const Vec3 nr = raw / len;
    sum += 1.0 - nr.dot(nd);
    // d(1 - nr.nd)/draw = -(I - nr nr^T) nd / |raw|
    const Vec3 grad = -(nd - nr * nr.dot(nd)) / len * inv;
    for (int c = 0; c < 3; ++c) g[3 * p + c] = grad[c];
  }
  r.value = sum * inv;
  return r;
}

LossReport loss_geo(const RenderOutput& render, const Camera& camera) {
  return loss_geo(render.normal, depth_normals(render, camera));
}

LossReport loss_sem_l2(const FloatImage& rendered, const FloatImage& target) {
  require_same(rendered, target, "loss_sem_l2");
  LossReport r{"sem_l2", 0.0, {}};
  auto& g = r.grads["rendered"];
  g.assign(rendered.data.size(), 0.0);
  if (rendered.data.empty()) return r;
  const double inv = 1.0 / static_cast<double>(rendered.data.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    sum += d * d;
    g[i] = 2.0 * d * inv;
  }
  r.value = sum * inv;
  return r;
}

LossReport loss_sg(const FloatImage& rendered, const LabelImage& masks, std::size_t pair_cap,
                   std::uint64_t seed) {
  require_three_channels(rendered, "loss_sg");
  require_same_hw(rendered, masks, "loss_sg");
  if (pair_cap == 0) throw InvalidParameter("loss_sg: pair cap must be positive");
  LossReport r{"sg", 0.0, {}};
  auto& g = r.grads["rendered"];
  g.assign(rendered.data.size(), 0.0);

  auto members = mask_members(masks);
  std::erase_if(members, [](const auto& m) { return m.empty(); });
  if (members.empty()) return r;
  const double inv_masks = 1.0 / static_cast<double>(members.size());

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& pix : members) {
    const std::size_t n = pix.size();
    if (n < 2) continue;
    pairs.clear();
    const std::size_t all = n * (n - 1) / 2;
    if (all <= pair_cap) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(pix[i], pix[j]);
    } else {
      std::mt19937_64 rng(derive_seed(seed, {pix.front()}));
      std::uniform_int_distribution<std::size_t> first(0, n - 1), second(0, n - 2);
      for (std::size_t k = 0; k < pair_cap; ++k) {
        const std::size_t i = first(rng);
        std::size_t j = second(rng);
        if (j >= i) ++j;
        pairs.emplace_back(pix[i], pix[j]);
      }
    }
    const double scale = inv_masks / static_cast<double>(pairs.size());
    double mask_sum = 0.0;
    for (const auto& [a, b] : pairs) {
      const Vec3 d = feature_at(rendered, a) - feature_at(rendered, b);
      const double len = d.norm();
      mask_sum += len;
      if (len > 0) {
        const Vec3 u = d / len * scale;
        for (int c = 0; c < 3; ++c) {
          g[3 * a + c] += u[c];
          g[3 * b + c] -= u[c];
        }
      }
    }
    r.value += mask_sum * scale;
  }
  return r;
}

Vec3 feature_distribution(const Vec3& f) {
  const double m = f.maxCoeff();
  Vec3 e = (f.array() - m).exp();
  e /= e.sum();
  return e.cwiseMax(kS3dFloor);
}

LossReport loss_s3d(const GaussianScene& scene, std::size_t k) {
  if (k == 0) throw InvalidParameter("loss_s3d: k must be >= 1");
  if (k >= scene.size()) {
    throw InvalidParameter("loss_s3d: k = " + std::to_string(k) + " needs more than k Gaussians (have " +
                           std::to_string(scene.size()) + ")");
  }
  const auto graph = knn_graph(scene.position, k);
  return loss_s3d(scene, graph, k);
}

LossReport loss_s3d(const GaussianScene& scene, std::span<const std::uint32_t> graph, std::size_t k) {
  const std::size_t n = scene.size();
  if (k == 0 || k >= n) throw InvalidParameter("loss_s3d: need 1 <= k < N");
  if (graph.size() != n * k) throw ShapeError("loss_s3d: neighbour graph must be N x k");
  LossReport r{"s3d", 0.0, {}};
  auto& g = r.grads["f_lang"];
  g.assign(scene.f_lang.size(), 0.0);

  std::vector<Vec3> soft(n), dist(n);
  std::vector<std::array<bool, 3>> floored(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 f = scene.lang(i);
    const double m = f.maxCoeff();
    Vec3 e = (f.array() - m).exp();
    soft[i] = e / e.sum();
    dist[i] = soft[i].cwiseMax(kS3dFloor);
    for (int c = 0; c < 3; ++c) floored[i][static_cast<std::size_t>(c)] = soft[i][c] < kS3dFloor;
  }

  // Gradient w.r.t. the floored distributions first.
  std::vector<Vec3> g_dist(n, Vec3::Zero());
  const double scale = 1.0 / static_cast<double>(n * k);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3& p = dist[j];
    for (std::size_t m = 0; m < k; ++m) {
      const std::size_t nb = graph[j * k + m];
      const Vec3& q = dist[nb];
      for (int c = 0; c < 3; ++c) {
        const double lp = std::log(p[c]), lq = std::log(q[c]);
        sum += p[c] * (lp - lq);
        g_dist[j][c] += scale * (lp + 1.0 - lq);
        g_dist[nb][c] += scale * (-p[c] / q[c]);
      }
    }
  }
  r.value = std::max(0.0, sum * scale);

  // Through the floor and the softmax.
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 gd = g_dist[i];
    for (int c = 0; c < 3; ++c) {
      if (floored[i][static_cast<std::size_t>(c)]) gd[c] = 0.0;
    }
    const double dot = soft[i].dot(gd);
    for (int c = 0; c < 3; ++c) g[3 * i + c] = soft[i][c] * (gd[c] - dot);
  }
  return r;
}

std::vector<Vec3> instance_mean(const FloatImage& rendered, const LabelImage& masks) {
  require_three_channels(rendered, "instance_mean");
  require_same_hw(rendered, masks, "instance_mean");
  const auto members = mask_members(masks);
  std::vector<Vec3> means;
  means.reserve(members.size());
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (members[j].empty()) {
      throw InvalidParameter("instance_mean: mask id " + std::to_string(j + 1) + " is empty; densify first");
    }
    Vec3 s = Vec3::Zero();
    for (auto p : members[j]) s += feature_at(rendered, p);
    means.push_back(s / static_cast<double>(members[j].size()));
  }
  return means;
}

LossReport loss_icd(std::span<const Vec3> means, double d_min) {
  if (!(d_min > 0)) throw InvalidParameter("loss_icd: d_min must be positive");
  if (means.empty()) throw InvalidParameter("loss_icd: need at least one mask");
  LossReport r{"icd", 0.0, {}};
  auto& g = r.grads["z"];
  g.assign(3 * means.size(), 0.0);
  const std::size_t m = means.size();
  if (m < 2) return r;
  const double inv_pairs = 2.0 / static_cast<double>(m * (m - 1));
  const Vec3 fallback = Vec3::Ones().normalized();
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = j + 1; k < m; ++k) {
      const Vec3 d = means[j] - means[k];
      const double dist = d.norm();
      const double gap = d_min - dist;
      if (gap <= 0) continue;
      r.value += gap * inv_pairs;
      const Vec3 u = dist > 1e-12 ? Vec3(d / dist) : fallback;
      for (int c = 0; c < 3; ++c) {
        g[3 * j + c] -= u[c] * inv_pairs;
        g[3 * k + c] += u[c] * inv_pairs;
      }
    }
  }
  return r;
}

LossReport loss_icd_map(const FloatImage& rendered, const LabelImage& masks, double d_min) {
  require_three_channels(rendered, "loss_icd_map");
  auto members = mask_members(masks);
  std::erase_if(members, [](const auto& mm) { return mm.empty(); });
  LossReport r{"icd", 0.0, {}};
  auto& g = r.grads["rendered"];
  g.assign(rendered.data.size(), 0.0);
  if (members.empty()) return r;
  std::vector<Vec3> means;
  for (const auto& pix : members) {
    Vec3 s = Vec3::Zero();
    for (auto p : pix) s += feature_at(rendered, p);
    means.push_back(s / static_cast<double>(pix.size()));
  }
  const LossReport inner = loss_icd(means, d_min);
  r.value = inner.value;
  const auto& gz = inner.grad("z");
  for (std::size_t j = 0; j < members.size(); ++j) {
    const double inv = 1.0 / static_cast<double>(members[j].size());
    for (auto p : members[j])
      for (int c = 0; c < 3; ++c) g[3 * p + c] = gz[3 * j + c] * inv;
  }
  return r;
}

}  // namespace langsurf
