#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace langsurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Trainable parameter arrays of a GaussianScene.
enum class ParamGroup : int {
  Position = 0,
  Rotation,
  LogScale,
  OpacityLogit,
  Color,
  FLang,
  FIns,
};
inline constexpr int kParamGroupCount = 7;
inline constexpr std::array<ParamGroup, kParamGroupCount> kAllParamGroups = {
    ParamGroup::Position, ParamGroup::Rotation, ParamGroup::LogScale, ParamGroup::OpacityLogit,
    ParamGroup::Color,    ParamGroup::FLang,    ParamGroup::FIns};

/// Values per Gaussian for a group (3, 4 or 1).
int group_width(ParamGroup group);
std::string_view group_name(ParamGroup group);
ParamGroup group_from_name(std::string_view name);

/// Structure-of-arrays Gaussian field. Each array is flat, row-major with
/// group_width(group) values per Gaussian:
///   position       world coordinates
///   rotation       quaternion (w, x, y, z)
///   log_scale      ln of per-axis standard deviation
///   opacity_logit  logit of opacity
///   color          degree-0 RGB in [0, 1]
///   f_lang, f_ins  3-d language and instance latents
struct GaussianScene {
  std::vector<double> position;
  std::vector<double> rotation;
  std::vector<double> log_scale;
  std::vector<double> opacity_logit;
  std::vector<double> color;
  std::vector<double> f_lang;
  std::vector<double> f_ins;

  std::size_t size() const { return opacity_logit.size(); }
  bool empty() const { return size() == 0; }

  /// Appends one Gaussian; all arrays grow together.
  void push_back(const Vec3& pos, const Vec4& quat_wxyz, const Vec3& log_scale3,
                 double opacity_logit1, const Vec3& rgb, const Vec3& lang = Vec3::Zero(),
                 const Vec3& ins = Vec3::Zero());
  void resize(std::size_t n);

  std::vector<double>& group(ParamGroup g);
  const std::vector<double>& group(ParamGroup g) const;

  Vec3 pos(std::size_t i) const { return {position[3 * i], position[3 * i + 1], position[3 * i + 2]}; }
  Vec4 quat(std::size_t i) const {
    return {rotation[4 * i], rotation[4 * i + 1], rotation[4 * i + 2], rotation[4 * i + 3]};
  }
  Vec3 scale_log(std::size_t i) const {
    return {log_scale[3 * i], log_scale[3 * i + 1], log_scale[3 * i + 2]};
  }
  Vec3 rgb(std::size_t i) const { return {color[3 * i], color[3 * i + 1], color[3 * i + 2]}; }
  Vec3 lang(std::size_t i) const { return {f_lang[3 * i], f_lang[3 * i + 1], f_lang[3 * i + 2]}; }
  Vec3 ins(std::size_t i) const { return {f_ins[3 * i], f_ins[3 * i + 1], f_ins[3 * i + 2]}; }
  double opacity(std::size_t i) const;

  /// Subset in the order given by `indices`.
  GaussianScene select(std::span<const std::size_t> indices) const;

  /// Throws ShapeError if array lengths disagree, InvalidParameter on
  /// non-finite values.
  void validate() const;

  /// Renormalizes every quaternion to unit length.
  void normalize_rotations();

  bool operator==(const GaussianScene&) const = default;
};

/// Pinhole camera; world_to_camera maps world points into a right-handed
/// camera frame looking down +z. Pixel (x, y) has its center at (x, y).
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat4 world_to_camera = Mat4::Identity();

  Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  Vec3 center() const { return -rotation().transpose() * translation(); }

  /// Throws InvalidParameter on bad intrinsics or non-orthonormal rotation.
  void validate() const;

  /// Camera at `eye` looking at `target`; image y points along -up.
  static Camera look_at(int width, int height, double fx, double fy, const Vec3& eye,
                        const Vec3& target, const Vec3& up);
};

double sigmoid(double x);
double logit(double p);

/// Rotation matrix of q / |q|, q = (w, x, y, z).
Mat3 quat_to_matrix(const Vec4& q);
Vec4 matrix_to_quat(const Mat3& r);
/// Hamilton product a * b.
Vec4 quat_multiply(const Vec4& a, const Vec4& b);

/// Sigma = R diag(exp(2 * log_scale)) R^T.
Mat3 covariance(const Vec4& rotation, const Vec3& log_scale);

/// Index of the smallest log-scale; ties resolve to the lowest axis.
int min_scale_axis(const Vec3& log_scale);

/// Rotation column belonging to the smallest scale axis.
Vec3 surface_normal(const Vec4& rotation, const Vec3& log_scale);

/// Binary little-endian PLY with float32 vertex properties
/// x y z rot_0..3 scale_0..2 opacity red green blue flang_0..2 fins_0..2.
/// Values round to float32 on save.
void save_scene(const GaussianScene& scene, const std::filesystem::path& path);
GaussianScene load_scene(const std::filesystem::path& path);

/// 64-bit FNV-1a over the raw bytes of the selected arrays.
std::uint64_t hash_groups(const GaussianScene& scene, std::span<const ParamGroup> groups);
std::uint64_t hash_scene(const GaussianScene& scene);

}  // namespace langsurf
