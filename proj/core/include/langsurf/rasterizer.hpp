#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "langsurf/image.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

/// Fixed rasterization constants.
struct RasterConstants {
  static constexpr double kNearPlane = 0.01;
  /// Added to the 2D covariance diagonal (pixels^2).
  static constexpr double kDilation = 0.3;
  static constexpr double kAlphaCap = 0.99;
  static constexpr double kAlphaMin = 1.0 / 255.0;
  static constexpr double kTransmittanceMin = 1e-4;
  static constexpr int kTileSize = 8;
};

struct ProjectedGaussian {
  std::size_t index = 0;  ///< position in the source scene
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();  ///< includes dilation
  Mat2 conic = Mat2::Identity();  ///< cov2d inverse
  double depth = 0;               ///< camera-space z
  Vec3 view_normal = Vec3::UnitZ();
  double opacity = 0;
  int normal_axis = 2;       ///< min-scale axis the normal comes from
  double normal_sign = 1.0;  ///< +1 or -1 so the normal faces the camera
  /// Inclusive pixel rectangle outside of which the Gaussian cannot pass the
  /// 1/255 alpha threshold, clipped to the image.
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
};

struct Projection {
  std::vector<ProjectedGaussian> visible;
  std::vector<std::uint8_t> visible_mask;  ///< one entry per scene Gaussian
};

/// Perspective EWA projection with near-plane and 3-sigma image culling.
Projection project(const GaussianScene& scene, const Camera& camera);

enum class Channels { Color, Lang, Ins, All };

namespace detail {
struct RenderState;
}

/// Composited maps of one view. color, depth, normal and alpha are always
/// produced; lang / ins only when requested. Feature maps are not divided by
/// alpha.
struct RenderOutput {
  Channels channels = Channels::Color;
  FloatImage color;   ///< H x W x 3
  FloatImage lang;    ///< H x W x 3 or empty
  FloatImage ins;     ///< H x W x 3 or empty
  FloatImage depth;   ///< H x W x 1, alpha-weighted camera z
  FloatImage normal;  ///< H x W x 3, camera frame, alpha-weighted
  FloatImage alpha;   ///< H x W x 1
  /// Gaussian with the largest compositing weight per pixel, -1 if none.
  LabelImage top_index;
  /// Per-pixel sum of compositing weights plus final transmittance; exposed
  /// for invariant checks.
  FloatImage weight_plus_transmittance;

  std::shared_ptr<const detail::RenderState> state;
};

RenderOutput render(const GaussianScene& scene, const Camera& camera,
                    Channels channels = Channels::All);

/// Upstream gradients. Empty images are treated as zero; non-empty ones must
/// match the rendered shape.
struct GradMaps {
  FloatImage color;
  FloatImage lang;
  FloatImage ins;
  FloatImage depth;
  FloatImage normal;
  FloatImage alpha;
};

/// Same layout as the scene; every array holds dLoss/dParameter.
using SceneGradient = GaussianScene;

/// Zero gradient arrays shaped like `scene`.
SceneGradient zero_gradient(const GaussianScene& scene);

/// Exact gradient of sum(grad_maps * rendered maps) with respect to every
/// scene parameter, through alpha evaluation, projection, covariance and the
/// log / logit / quaternion-normalization reparameterizations. `forward`
/// must come from render() on the same scene and camera.
SceneGradient render_backward(const GaussianScene& scene, const Camera& camera,
                              const RenderOutput& forward, const GradMaps& grad_maps);

}  // namespace langsurf
