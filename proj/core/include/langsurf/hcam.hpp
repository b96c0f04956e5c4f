#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "langsurf/image.hpp"
#include "langsurf/rasterizer.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

/// Dense per-pixel feature map, H x W x D with D >= 3.
using FeatureImage = FloatImage;

enum class Hierarchy : int { Small = 0, Medium = 1, Large = 2 };
inline constexpr std::array<Hierarchy, 3> kHierarchies = {Hierarchy::Small, Hierarchy::Medium,
                                                          Hierarchy::Large};
char hierarchy_letter(Hierarchy h);
Hierarchy hierarchy_from_letter(char c);

/// Mask-id maps for the three hierarchies. 0 = unassigned; ids dense from 1.
struct MaskSet {
  std::array<LabelImage, 3> levels;

  const LabelImage& at(Hierarchy h) const { return levels[static_cast<int>(h)]; }
  LabelImage& at(Hierarchy h) { return levels[static_cast<int>(h)]; }
};

/// Relabels ids > 0 to 1..K preserving ascending order of the original ids.
/// Negative ids are rejected.
LabelImage densify_mask_ids(const LabelImage& ids);
/// Largest id in a dense map (the mask count).
int mask_count(const LabelImage& ids);

/// Token -> D-vector table. Label id k (1-based) is entry k - 1.
struct Codebook {
  std::vector<std::string> tokens;
  std::vector<Eigen::VectorXd> vectors;

  int dim() const { return vectors.empty() ? 0 : static_cast<int>(vectors.front().size()); }
  std::size_t size() const { return tokens.size(); }
  /// Throws LookupError naming the available tokens.
  std::size_t index_of(const std::string& token) const;
};

/// UTF-8 text, one `<token> <v1> ... <vD>` entry per line; '#' starts a comment.
Codebook load_codebook(const std::filesystem::path& path);
void save_codebook(const std::filesystem::path& path, const Codebook& codebook);

/// Reads an (H, W, D) float32 tensor file. Rejects D < 3, wrong rank, or a
/// size that differs from `expect_h` x `expect_w` when those are positive.
FeatureImage load_feature_image(const std::filesystem::path& path, int expect_h = 0, int expect_w = 0);
/// Reads three (H, W) int32 tensors in s, m, l order and densifies them.
MaskSet load_mask_set(std::span<const std::filesystem::path> paths, int expect_h = 0, int expect_w = 0);

/// Masked average pooling for one hierarchy: pixels in mask j take the mean
/// raw feature of mask j; unassigned pixels keep their raw feature.
FeatureImage mask_pool(const FeatureImage& feature, const LabelImage& masks);

/// High-dimensional pooled maps for all three hierarchies.
struct PooledFeatureImage {
  std::array<FeatureImage, 3> pooled;  ///< H x W x D
  std::array<FloatImage, 3> latent;    ///< H x W x 3, filled by build_targets
};
PooledFeatureImage hierarchical_mask_pool(const FeatureImage& feature, const MaskSet& masks);

/// Single-layer affine encoder (D -> 3) and decoder (3 -> D).
struct Autoencoder {
  Eigen::MatrixXd enc_w;  ///< 3 x D
  Eigen::Vector3d enc_b = Eigen::Vector3d::Zero();
  Eigen::MatrixXd dec_w;  ///< D x 3
  Eigen::VectorXd dec_b;  ///< D
  double final_loss = 0.0;
  std::vector<double> loss_history;  ///< loss before each epoch, then final

  int dim() const { return static_cast<int>(dec_b.size()); }

  static Autoencoder identity3();
  static Autoencoder zeros(int dim);
};

enum class AeInit { Identity, Pca, Random };

struct AeTrainOptions {
  int epochs = 200;
  double lr = 1e-2;
  AeInit init = AeInit::Pca;
  std::uint64_t seed = 0;
};

/// Full-batch gradient descent on the mean squared reconstruction error.
/// Needs at least 4 samples of equal dimension D >= 3.
Autoencoder ae_train(std::span<const Eigen::VectorXd> samples, const AeTrainOptions& options);
double ae_reconstruction_mse(const Autoencoder& model, std::span<const Eigen::VectorXd> samples);

Eigen::Vector3d ae_encode(const Autoencoder& model, const Eigen::VectorXd& x);
Eigen::VectorXd ae_decode(const Autoencoder& model, const Eigen::Vector3d& z);
FloatImage ae_encode(const Autoencoder& model, const FeatureImage& map);
FeatureImage ae_decode(const Autoencoder& model, const FloatImage& latent);

/// Packed float32 tensor of length 7D + 3: enc_w, enc_b, dec_w, dec_b.
void save_autoencoder(const std::filesystem::path& path, const Autoencoder& model);
Autoencoder load_autoencoder(const std::filesystem::path& path);

struct FeatureView {
  FeatureImage feature;
  MaskSet masks;
};

/// Latent targets per view and hierarchy: encode(mask_pool(feature)).
std::vector<std::array<FloatImage, 3>> build_targets(std::span<const FeatureView> views,
                                                     const Autoencoder& model);

/// Feature samples (one per pixel) from pooled maps, for autoencoder training.
std::vector<Eigen::VectorXd> pooled_samples(std::span<const FeatureView> views, Hierarchy level,
                                            std::size_t stride = 1);

/// Ground-truth view from a labeled scene: per pixel the label of the
/// largest-weight Gaussian (where rendered alpha >= 0.5), its codebook
/// vector plus N(0, sigma^2) noise. Hierarchies: s = connected components
/// of each object, m = objects, l = categories.
struct SyntheticFeatureView {
  FeatureImage feature;
  MaskSet masks;
  LabelImage label_map;   ///< category label per pixel, 0 = background
  LabelImage object_map;  ///< object id per pixel, 0 = background
};

SyntheticFeatureView make_synthetic_features(const GaussianScene& scene,
                                             std::span<const std::int32_t> labels,
                                             std::span<const std::int32_t> object_ids,
                                             const Camera& camera, const Codebook& codebook,
                                             double noise_sigma = 0.0, std::uint64_t seed = 0);

/// 4-connected components of each nonzero id region, numbered in raster
/// order of first pixel.
LabelImage connected_components(const LabelImage& ids);

}  // namespace langsurf
