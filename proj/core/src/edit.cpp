#include "langsurf/edit.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "langsurf/error.hpp"
#include "langsurf/parallel.hpp"

namespace langsurf {

RemovalResult remove_selection(const GaussianScene& scene, std::span<const std::size_t> selected) {
  if (selected.empty()) throw NoMatchError("remove: the query selected no Gaussians; scene left unchanged");
  const std::size_t n = scene.size();
  std::vector<std::uint8_t> drop(n, 0);
  std::vector<Vec3> centers;
  centers.reserve(selected.size());
  for (auto i : selected) {
    if (i >= n) throw InvalidParameter("remove: selection index " + std::to_string(i) + " out of range");
    centers.push_back(scene.pos(i));
  }

  RemovalResult result;
  result.selected = selected.size();
  try {
    const ConvexHull hull = build_hull(centers);
    parallel_for(n, [&](std::size_t i) { drop[i] = contains(hull, scene.pos(i)) ? 1 : 0; });
  } catch (const DegenerateHullError& e) {
    result.used_hull = false;
    result.selection_rank = e.affine_rank();
  }
  for (auto i : selected) drop[i] = 1;

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) (drop[i] ? result.removed : keep).push_back(i);
  result.scene = scene.select(keep);
  return result;
}

RemovalResult remove_object(const GaussianScene& scene, const Autoencoder& model, const TextQuery& query,
                            double threshold) {
  const auto selection = query_3d(scene, model, query, threshold).indices();
  if (selection.empty()) {
    throw NoMatchError("remove: query '" + query.token + "' selected no Gaussians at threshold " +
                       std::to_string(threshold) + "; scene left unchanged");
  }
  return remove_selection(scene, selection);
}

void SimilarityTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(scale)) {
    throw InvalidParameter("transform: non-finite entries");
  }
  if (!(scale > 0)) throw InvalidParameter("transform: scale must be positive");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw InvalidParameter("transform: rotation block is not a proper orthonormal rotation");
  }
}

TransplantResult transplant(const GaussianScene& src, std::span<const std::size_t> selection,
                            const GaussianScene& dst, const SimilarityTransform& transform) {
  transform.validate();
  if (selection.empty()) throw NoMatchError("add: empty selection");
  TransplantResult out;
  out.scene = dst;
  const Vec4 qr = matrix_to_quat(transform.rotation);
  const double ln_s = std::log(transform.scale);
  const bool identity = transform.rotation == Mat3::Identity() && transform.scale == 1.0;
  for (auto i : selection) {
    if (i >= src.size()) throw InvalidParameter("add: selection index " + std::to_string(i) + " out of range");
    Vec3 p = src.pos(i);
    Vec4 q = src.quat(i);
    Vec3 ls = src.scale_log(i);
    if (!identity) {
      p = transform.scale * (transform.rotation * p);
      q = quat_multiply(qr, q);
      q /= q.norm();
      ls = ls.array() + ln_s;
    }
    p += transform.translation;
    out.added.push_back(out.scene.size());
    out.scene.push_back(p, q, ls, src.opacity_logit[i], src.rgb(i), src.lang(i), src.ins(i));
  }
  return out;
}

void save_edit_manifest(const std::filesystem::path& path, const EditManifest& m) {
  nlohmann::json j;
  j["operation"] = m.operation;
  j["query"] = m.query;
  j["threshold"] = m.threshold;
  j["removed"] = m.removed;
  j["added"] = m.added;
  j["used_hull"] = m.used_hull;
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

EditManifest load_edit_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    EditManifest m;
    m.operation = j.at("operation").get<std::string>();
    m.query = j.at("query").get<std::string>();
    m.threshold = j.at("threshold").get<double>();
    m.removed = j.at("removed").get<std::vector<std::size_t>>();
    m.added = j.at("added").get<std::vector<std::size_t>>();
    m.used_hull = j.at("used_hull").get<bool>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace langsurf
