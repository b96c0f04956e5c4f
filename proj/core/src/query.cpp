#include "langsurf/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "langsurf/error.hpp"
#include "langsurf/ply.hpp"

namespace langsurf {

TextQuery make_query(const std::string& token, const Eigen::VectorXd& embedding) {
  const double norm = embedding.norm();
  if (!(norm > 0) || !std::isfinite(norm)) {
    throw InvalidParameter("query '" + token + "': embedding must be finite and nonzero");
  }
  return {token, embedding / norm};
}

TextQuery embed_query(const std::string& token, const Codebook& codebook) {
  return make_query(token, codebook.vectors[codebook.index_of(token)]);
}

double relevancy(const Autoencoder& model, const Eigen::Vector3d& latent, const TextQuery& query) {
  if (query.embedding.size() != model.dim()) {
    throw ShapeError("relevancy: query has dimension " + std::to_string(query.embedding.size()) +
                     ", autoencoder decodes to " + std::to_string(model.dim()));
  }
  const Eigen::VectorXd f = ae_decode(model, latent);
  const double norm = f.norm();
  if (!(norm > 0)) return 0.0;
  const double s = std::clamp(f.dot(query.embedding) / norm, -1.0, 1.0);
  return (s + 1.0) / 2.0;
}

FloatImage relevancy_2d(const FloatImage& latent_map, const Autoencoder& model, const TextQuery& query) {
  if (latent_map.channels != 3) throw ShapeError("relevancy_2d: latent map must have 3 channels");
  FloatImage out(latent_map.height, latent_map.width, 1);
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    const auto px = latent_map.pixel(p);
    out.data[p] = relevancy(model, Eigen::Vector3d(px[0], px[1], px[2]), query);
  }
  return out;
}

std::vector<std::size_t> Selection3d::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) out.push_back(i);
  }
  return out;
}

Selection3d query_3d(const GaussianScene& scene, const Autoencoder& model, const TextQuery& query,
                     double threshold) {
  Selection3d sel;
  sel.threshold = threshold;
  sel.scores.resize(scene.size());
  sel.selected.resize(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    sel.scores[i] = relevancy(model, scene.lang(i), query);
    sel.selected[i] = sel.scores[i] >= threshold ? 1 : 0;
  }
  return sel;
}

void save_selection_ply(const std::filesystem::path& path, const GaussianScene& scene, const Selection3d& selection) {
  if (selection.scores.size() != scene.size()) throw ShapeError("save_selection_ply: selection does not match scene");
  PlyTable table;
  table.names = {"x", "y", "z", "score"};
  for (const auto& n : table.names) table.columns[n];
  for (auto i : selection.indices()) {
    table.columns["x"].push_back(scene.position[3 * i]);
    table.columns["y"].push_back(scene.position[3 * i + 1]);
    table.columns["z"].push_back(scene.position[3 * i + 2]);
    table.columns["score"].push_back(selection.scores[i]);
  }
  table.count = table.columns["x"].size();
  write_ply_vertices(path, table);
}

BoolImage segment_2d(const FloatImage& score_map, double threshold) {
  BoolImage mask(score_map.height, score_map.width, 1);
  for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = score_map.data[p] >= threshold ? 1 : 0;
  return mask;
}

FloatImage box_filter(const FloatImage& map, int size) {
  if (size < 1) throw InvalidParameter("box_filter: size must be >= 1");
  if (map.channels != 1) throw ShapeError("box_filter: expected a single-channel map");
  const int h = map.height, w = map.width;
  const int lead = (size - 1) / 2;
  auto clamp_x = [w](int x) { return std::clamp(x, 0, w - 1); };
  auto clamp_y = [h](int y) { return std::clamp(y, 0, h - 1); };
  // Separable: rows then columns.
  FloatImage rows(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = 0; d < size; ++d) s += map.at(clamp_x(x - lead + d), y);
      rows.at(x, y) = s / size;
    }
  }
  FloatImage out(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = 0; d < size; ++d) s += rows.at(x, clamp_y(y - lead + d));
      out.at(x, y) = s / size;
    }
  }
  return out;
}

Localization localize(const FloatImage& score_map, const BBox& box, int filter_size) {
  if (box.x1 < box.x0 || box.y1 < box.y0 || box.x0 < 0 || box.y0 < 0 || box.x1 >= score_map.width ||
      box.y1 >= score_map.height) {
    throw InvalidParameter("localize: bounding box [" + std::to_string(box.x0) + "," + std::to_string(box.x1) + "]x[" +
                           std::to_string(box.y0) + "," + std::to_string(box.y1) + "] is empty or outside the image");
  }
  const FloatImage smooth = box_filter(score_map, filter_size);
  Localization loc;
  loc.score = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < smooth.height; ++y) {
    for (int x = 0; x < smooth.width; ++x) {
      if (smooth.at(x, y) > loc.score) {
        loc.score = smooth.at(x, y);
        loc.x = x;
        loc.y = y;
      }
    }
  }
  loc.hit = loc.x >= box.x0 && loc.x <= box.x1 && loc.y >= box.y0 && loc.y <= box.y1;
  return loc;
}

}  // namespace langsurf
