#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "langsurf/image.hpp"
#include "langsurf/rasterizer.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

/// Scalar loss plus gradients keyed by the name of the input they refer to
/// ("rendered", "normal", "log_scale", "f_lang", "z"). Each gradient array
/// has the same flat layout as that input.
struct LossReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, std::vector<double>> grads;

  const std::vector<double>& grad(const std::string& key) const;
};

/// Mean absolute difference over all H*W*3 entries; sign(0) = 0.
LossReport loss_rgb(const FloatImage& rendered, const FloatImage& target);

/// Mean over Gaussians of the smallest scale exp(min(log_scale)). Gradient
/// goes to the argmin axis only (lowest index on ties).
LossReport loss_flat(const GaussianScene& scene);

/// Unit normals of the unprojected depth map (depth / alpha) from central
/// differences, oriented toward the camera. A pixel is valid when it is off
/// the border and it and its four neighbours have alpha > 0.5.
struct DepthNormals {
  FloatImage normal;  ///< H x W x 3
  std::vector<std::uint8_t> valid;
};
DepthNormals depth_normals(const RenderOutput& render, const Camera& camera);

/// Mean over valid pixels of 1 - normalize(rendered normal) . depth normal.
/// The depth normal is a constant; gradient key "normal".
LossReport loss_geo(const RenderOutput& render, const Camera& camera);
LossReport loss_geo(const FloatImage& rendered_normal, const DepthNormals& reference);

/// Mean squared difference over all entries.
LossReport loss_sem_l2(const FloatImage& rendered, const FloatImage& target);

/// Semantic grouping: mean over masks of the mean Euclidean distance between
/// unordered distinct pixel pairs inside the mask. Masks with more than
/// `pair_cap` pairs use `pair_cap` seeded random pairs; the stream for a mask
/// depends on `seed` and the mask's first pixel, not on its id.
LossReport loss_sg(const FloatImage& rendered, const LabelImage& masks, std::size_t pair_cap = 1024,
                   std::uint64_t seed = 0);

/// Channel softmax floored at `kS3dFloor`.
inline constexpr double kS3dFloor = 1e-8;
Vec3 feature_distribution(const Vec3& f);

/// Mean KL(p_j || p_n) over every Gaussian j and its k nearest neighbours n,
/// with p = floored softmax of f_lang. Gradient key "f_lang".
LossReport loss_s3d(const GaussianScene& scene, std::size_t k);
/// Same, with a precomputed N x k neighbour graph.
LossReport loss_s3d(const GaussianScene& scene, std::span<const std::uint32_t> graph, std::size_t k);

/// Mean rendered feature per mask id 1..M (entry j - 1 for id j).
std::vector<Vec3> instance_mean(const FloatImage& rendered, const LabelImage& masks);

/// Mean over unordered pairs of ReLU(d_min - |z_j - z_k|). Gradient key "z"
/// (3M values). Coincident means use the fixed separating direction
/// (1,1,1)/sqrt(3).
LossReport loss_icd(std::span<const Vec3> means, double d_min);

/// loss_icd on instance_mean(rendered, masks), with the gradient carried
/// back to the rendered map (key "rendered"). Zero when no masks are present.
LossReport loss_icd_map(const FloatImage& rendered, const LabelImage& masks, double d_min);

}  // namespace langsurf
