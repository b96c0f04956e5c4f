#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "langsurf/hcam.hpp"
#include "langsurf/hull.hpp"
#include "langsurf/query.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

struct RemovalResult {
  GaussianScene scene;
  std::vector<std::size_t> removed;  ///< indices into the input scene
  std::size_t selected = 0;
  /// False when the selection was degenerate and only it was deleted.
  bool used_hull = true;
  int selection_rank = 3;
};

/// Deletes every Gaussian whose center lies in the convex hull of the
/// selected centers; a degenerate selection deletes just itself. An empty
/// selection raises NoMatchError.
RemovalResult remove_selection(const GaussianScene& scene, std::span<const std::size_t> selected);

/// query_3d at `threshold`, then remove_selection.
RemovalResult remove_object(const GaussianScene& scene, const Autoencoder& model, const TextQuery& query,
                            double threshold);

/// x -> scale * rotation * x + translation.
struct SimilarityTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  /// Proper orthonormal rotation within 1e-6 and a finite positive scale,
  /// otherwise InvalidParameter.
  void validate() const;
};

struct TransplantResult {
  GaussianScene scene;
  std::vector<std::size_t> added;  ///< indices of the copies in `scene`
};

/// Appends transformed copies of src[selection] to dst. Rotations are
/// left-composed, log-scales shifted by ln(scale); features are kept.
TransplantResult transplant(const GaussianScene& src, std::span<const std::size_t> selection,
                            const GaussianScene& dst, const SimilarityTransform& transform);

struct EditManifest {
  std::string operation;  ///< "remove" or "add"
  std::string query;
  double threshold = 0.0;
  std::vector<std::size_t> removed;
  std::vector<std::size_t> added;
  bool used_hull = true;
};

void save_edit_manifest(const std::filesystem::path& path, const EditManifest& manifest);
EditManifest load_edit_manifest(const std::filesystem::path& path);

}  // namespace langsurf
