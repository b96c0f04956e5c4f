#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "langsurf/hcam.hpp"
#include "langsurf/image.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

struct TextQuery {
  std::string token;
  Eigen::VectorXd embedding;  ///< unit length
};

/// Codebook lookup, L2-normalized. Unknown token: LookupError listing the
/// available tokens. Zero vector: InvalidParameter.
TextQuery embed_query(const std::string& token, const Codebook& codebook);
TextQuery make_query(const std::string& token, const Eigen::VectorXd& embedding);

/// (cos(decode(z), e) + 1) / 2; a zero decoded vector scores 0.
double relevancy(const Autoencoder& model, const Eigen::Vector3d& latent, const TextQuery& query);

/// H x W x 1 score map from an H x W x 3 latent map.
FloatImage relevancy_2d(const FloatImage& latent_map, const Autoencoder& model, const TextQuery& query);

struct Selection3d {
  std::vector<double> scores;         ///< per Gaussian
  std::vector<std::uint8_t> selected;  ///< score >= threshold
  double threshold = 0.0;

  std::vector<std::size_t> indices() const;
};

Selection3d query_3d(const GaussianScene& scene, const Autoencoder& model, const TextQuery& query,
                     double threshold);

/// Selected Gaussians as PLY vertices x, y, z, score.
void save_selection_ply(const std::filesystem::path& path, const GaussianScene& scene, const Selection3d& selection);

using BoolImage = Image<std::uint8_t>;

/// mask = score >= threshold (1 / 0).
BoolImage segment_2d(const FloatImage& score_map, double threshold);

/// Mean filter of even or odd size: output (x, y) averages the window
/// starting at (x - (size - 1) / 2, y - (size - 1) / 2), edge-clamped.
FloatImage box_filter(const FloatImage& map, int size);

struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  ///< inclusive
};

struct Localization {
  bool hit = false;
  int x = 0, y = 0;  ///< argmax of the smoothed map
  double score = 0.0;
};

/// Box filter, then the first row-major maximum; hit iff it lies in `box`.
/// A box with x1 < x0 or y1 < y0, or outside the image, is InvalidParameter.
Localization localize(const FloatImage& score_map, const BBox& box, int filter_size = 20);

}  // namespace langsurf
