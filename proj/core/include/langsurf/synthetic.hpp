#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langsurf/hcam.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

enum class PrimitiveKind { Plane, Box, Sphere };

/// One surface to sample. `extent` is interpreted per kind:
///   Plane   half sizes along the local x and y axes (normal = local z)
///   Box     half sizes along the local axes
///   Sphere  radius in extent.x()
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  std::int32_t label = 1;
  Vec3 center = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
  Vec3 extent = Vec3::Ones();
  Vec3 color = Vec3(0.5, 0.5, 0.5);
  std::size_t gaussian_count = 200;
  std::size_t cloud_count = 2000;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  double opacity = 0.95;
  /// Normal-axis scale as a fraction of the tangential scale.
  double flatness = 0.05;
  /// Tangential scale as a multiple of the mean sample spacing.
  double tangent_scale = 0.6;
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  GaussianScene scene;
  std::vector<std::int32_t> labels;      ///< category label per Gaussian
  std::vector<std::int32_t> object_ids;  ///< 1-based primitive index per Gaussian
  std::vector<double> cloud;             ///< 3M surface points
  std::vector<std::int32_t> cloud_labels;
};

/// Samples flattened Gaussians (min-scale axis along the surface normal)
/// and a labeled point cloud on every primitive. Throws InvalidParameter on
/// an empty spec.
SyntheticScene make_synthetic_scene(const SceneSpec& spec);

/// Starting point for training from a reference scene: positions jittered
/// by N(0, jitter^2), the min-scale axis raised to `min_scale_ratio` of the
/// largest scale, uniform opacity and gray color, zero features.
struct InitOptions {
  double position_jitter = 0.01;
  double min_scale_ratio = 0.5;
  double opacity = 0.5;
  double gray = 0.5;
  std::uint64_t seed = 0;
};
GaussianScene make_initial_scene(const GaussianScene& reference, const InitOptions& options = {});

/// In-code fixture: scene spec, training / held-out cameras, codebook.
struct Preset {
  std::string name;
  SceneSpec spec;
  std::vector<Camera> train_cameras;
  std::vector<Camera> heldout_cameras;
  Codebook codebook;
};

/// Known names: "two-spheres", "room-plane-boxes", "plane".
Preset make_preset(const std::string& name);
std::vector<std::string> preset_names();

/// Cameras on a ring of `count` views at `radius`, height `elevation`,
/// all looking at `target`.
std::vector<Camera> ring_cameras(int count, double radius, double elevation, const Vec3& target,
                                 int width, int height, double focal, double phase = 0.0);

/// `count` random unit vectors of dimension `dim`, Gram-Schmidt
/// orthonormalized when count <= dim.
std::vector<Eigen::VectorXd> orthonormal_codes(int count, int dim, std::uint64_t seed);

}  // namespace langsurf
