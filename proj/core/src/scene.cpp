#include "langsurf/scene.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "langsurf/error.hpp"
#include "langsurf/ply.hpp"

namespace langsurf {
namespace {

constexpr const char* kPlyNames[] = {
    "x",       "y",       "z",       "rot_0",   "rot_1",   "rot_2",   "rot_3",
    "scale_0", "scale_1", "scale_2", "opacity", "red",     "green",   "blue",
    "flang_0", "flang_1", "flang_2", "fins_0",  "fins_1",  "fins_2"};

// (group, component) for each PLY column above.
struct Column {
  ParamGroup group;
  int component;
};
constexpr Column kPlyColumns[] = {
    {ParamGroup::Position, 0}, {ParamGroup::Position, 1}, {ParamGroup::Position, 2},
    {ParamGroup::Rotation, 0}, {ParamGroup::Rotation, 1}, {ParamGroup::Rotation, 2},
    {ParamGroup::Rotation, 3}, {ParamGroup::LogScale, 0}, {ParamGroup::LogScale, 1},
    {ParamGroup::LogScale, 2}, {ParamGroup::OpacityLogit, 0}, {ParamGroup::Color, 0},
    {ParamGroup::Color, 1},    {ParamGroup::Color, 2},    {ParamGroup::FLang, 0},
    {ParamGroup::FLang, 1},    {ParamGroup::FLang, 2},    {ParamGroup::FIns, 0},
    {ParamGroup::FIns, 1},     {ParamGroup::FIns, 2}};

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidParameter(std::string(what) + ": non-finite input");
}

}  // namespace

int group_width(ParamGroup group) {
  switch (group) {
    case ParamGroup::Rotation:
      return 4;
    case ParamGroup::OpacityLogit:
      return 1;
    default:
      return 3;
  }
}

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::Position: return "position";
    case ParamGroup::Rotation: return "rotation";
    case ParamGroup::LogScale: return "log_scale";
    case ParamGroup::OpacityLogit: return "opacity_logit";
    case ParamGroup::Color: return "color";
    case ParamGroup::FLang: return "f_lang";
    case ParamGroup::FIns: return "f_ins";
  }
  return "?";
}

ParamGroup group_from_name(std::string_view name) {
  for (auto g : kAllParamGroups) {
    if (group_name(g) == name) return g;
  }
  throw LookupError("unknown parameter group '" + std::string(name) + "'");
}

void GaussianScene::push_back(const Vec3& pos, const Vec4& quat_wxyz, const Vec3& log_scale3,
                              double opacity_logit1, const Vec3& rgb, const Vec3& lang,
                              const Vec3& ins) {
  for (int k = 0; k < 3; ++k) {
    position.push_back(pos[k]);
    log_scale.push_back(log_scale3[k]);
    color.push_back(rgb[k]);
    f_lang.push_back(lang[k]);
    f_ins.push_back(ins[k]);
  }
  for (int k = 0; k < 4; ++k) rotation.push_back(quat_wxyz[k]);
  opacity_logit.push_back(opacity_logit1);
}

void GaussianScene::resize(std::size_t n) {
  for (auto g : kAllParamGroups) group(g).resize(n * static_cast<std::size_t>(group_width(g)));
}

std::vector<double>& GaussianScene::group(ParamGroup g) {
  switch (g) {
    case ParamGroup::Position: return position;
    case ParamGroup::Rotation: return rotation;
    case ParamGroup::LogScale: return log_scale;
    case ParamGroup::OpacityLogit: return opacity_logit;
    case ParamGroup::Color: return color;
    case ParamGroup::FLang: return f_lang;
    case ParamGroup::FIns: return f_ins;
  }
  return position;
}

const std::vector<double>& GaussianScene::group(ParamGroup g) const {
  return const_cast<GaussianScene*>(this)->group(g);
}

double GaussianScene::opacity(std::size_t i) const { return sigmoid(opacity_logit[i]); }

GaussianScene GaussianScene::select(std::span<const std::size_t> indices) const {
  GaussianScene out;
  for (auto g : kAllParamGroups) {
    const auto w = static_cast<std::size_t>(group_width(g));
    const auto& src = group(g);
    auto& dst = out.group(g);
    dst.reserve(indices.size() * w);
    for (auto i : indices) {
      if (i >= size()) throw InvalidParameter("select: index " + std::to_string(i) + " out of range");
      dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(i * w),
                 src.begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
    }
  }
  return out;
}

void GaussianScene::validate() const {
  const std::size_t n = size();
  for (auto g : kAllParamGroups) {
    const auto& a = group(g);
    if (a.size() != n * static_cast<std::size_t>(group_width(g))) {
      throw ShapeError("scene array '" + std::string(group_name(g)) + "' has " +
                       std::to_string(a.size()) + " values for " + std::to_string(n) + " Gaussians");
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!std::isfinite(a[k])) {
        throw InvalidParameter("scene array '" + std::string(group_name(g)) + "' non-finite at Gaussian " +
                               std::to_string(k / static_cast<std::size_t>(group_width(g))));
      }
    }
  }
}

void GaussianScene::normalize_rotations() {
  for (std::size_t i = 0; i < size(); ++i) {
    double* q = rotation.data() + 4 * i;
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (norm > 0) {
      for (int k = 0; k < 4; ++k) q[k] /= norm;
    } else {
      q[0] = 1.0;
    }
  }
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw InvalidParameter("camera: non-positive image size");
  if (!(fx > 0) || !(fy > 0)) throw InvalidParameter("camera: focal lengths must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height)) {
    throw InvalidParameter("camera: principal point outside image");
  }
  if (!world_to_camera.allFinite()) throw InvalidParameter("camera: non-finite pose");
  const Mat3 r = rotation();
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || r.determinant() < 0) {
    throw InvalidParameter("camera: rotation block is not orthonormal");
  }
}

Camera Camera::look_at(int width, int height, double fx, double fy, const Vec3& eye,
                       const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = r;
  cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  return cam;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Mat3 quat_to_matrix(const Vec4& q_raw) {
  const Vec4 q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 matrix_to_quat(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0) out = -out;
  return out;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Mat3 covariance(const Vec4& rotation, const Vec3& log_scale) {
  for (int k = 0; k < 4; ++k) require_finite(rotation[k], "covariance");
  for (int k = 0; k < 3; ++k) require_finite(log_scale[k], "covariance");
  if (rotation.norm() == 0) throw InvalidParameter("covariance: zero quaternion");
  const Mat3 r = quat_to_matrix(rotation);
  const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

int min_scale_axis(const Vec3& log_scale) {
  int best = 0;
  for (int k = 1; k < 3; ++k) {
    if (log_scale[k] < log_scale[best]) best = k;
  }
  return best;
}

Vec3 surface_normal(const Vec4& rotation, const Vec3& log_scale) {
  for (int k = 0; k < 4; ++k) require_finite(rotation[k], "surface_normal");
  for (int k = 0; k < 3; ++k) require_finite(log_scale[k], "surface_normal");
  return quat_to_matrix(rotation).col(min_scale_axis(log_scale));
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
  scene.validate();
  PlyTable table;
  table.count = scene.size();
  for (std::size_t c = 0; c < std::size(kPlyNames); ++c) {
    table.names.emplace_back(kPlyNames[c]);
    const auto [g, comp] = kPlyColumns[c];
    const auto w = static_cast<std::size_t>(group_width(g));
    auto& col = table.columns[kPlyNames[c]];
    col.resize(table.count);
    const auto& src = scene.group(g);
    for (std::size_t i = 0; i < table.count; ++i) col[i] = src[i * w + static_cast<std::size_t>(comp)];
  }
  write_ply_vertices(path, table);
}

GaussianScene load_scene(const std::filesystem::path& path) {
  const PlyTable table = read_ply_vertices(path);
  std::string missing;
  for (const char* name : kPlyNames) {
    if (!table.has(name)) missing += (missing.empty() ? "" : ", ") + std::string(name);
  }
  if (!missing.empty()) {
    throw FormatError(path.string() + ": scene file missing properties: " + missing);
  }
  GaussianScene scene;
  scene.resize(table.count);
  for (std::size_t c = 0; c < std::size(kPlyNames); ++c) {
    const auto [g, comp] = kPlyColumns[c];
    const auto w = static_cast<std::size_t>(group_width(g));
    const auto& col = table.column(kPlyNames[c]);
    auto& dst = scene.group(g);
    for (std::size_t i = 0; i < table.count; ++i) {
      if (!std::isfinite(col[i])) {
        throw FormatError(path.string() + ": non-finite value in vertex " + std::to_string(i) +
                          " property '" + kPlyNames[c] + "'");
      }
      dst[i * w + static_cast<std::size_t>(comp)] = col[i];
    }
  }
  return scene;
}

std::uint64_t hash_groups(const GaussianScene& scene, std::span<const ParamGroup> groups) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto g : groups) {
    const auto& a = scene.group(g);
    const auto* bytes = reinterpret_cast<const unsigned char*>(a.data());
    for (std::size_t k = 0; k < a.size() * sizeof(double); ++k) {
      h ^= bytes[k];
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::uint64_t hash_scene(const GaussianScene& scene) { return hash_groups(scene, kAllParamGroups); }

}  // namespace langsurf
