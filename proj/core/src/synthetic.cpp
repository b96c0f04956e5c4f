#include "langsurf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "langsurf/error.hpp"

namespace langsurf {
namespace {

// Low-discrepancy R2 sequence in [0, 1)^2.
Vec2 r2_point(std::size_t i) {
  constexpr double g = 1.32471795724474602596;  // plastic number
  constexpr double a1 = 1.0 / g;
  constexpr double a2 = 1.0 / (g * g);
  const double k = static_cast<double>(i) + 0.5;
  return {std::fmod(0.5 + a1 * k, 1.0), std::fmod(0.5 + a2 * k, 1.0)};
}

// Rotation whose third column is `n`.
Mat3 frame_with_normal(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t1 = (helper - n * n.dot(helper)).normalized();
  const Vec3 t2 = n.cross(t1);
  Mat3 r;
  r.col(0) = t1;
  r.col(1) = t2;
  r.col(2) = n;
  return r;
}

struct Face {
  Vec3 center;
  Mat3 frame;  // columns: u axis, v axis, outward normal
  double half_u, half_v;
  double area() const { return 4.0 * half_u * half_v; }
};

std::vector<Face> faces_of(const Primitive& p) {
  std::vector<Face> faces;
  if (p.kind == PrimitiveKind::Plane) {
    faces.push_back({p.center, p.orientation, p.extent.x(), p.extent.y()});
    return faces;
  }
  // Box: +-x, +-y, +-z faces.
  for (int axis = 0; axis < 3; ++axis) {
    const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
    for (double sgn : {1.0, -1.0}) {
      Mat3 local;
      local.col(0) = Vec3::Unit(ua);
      local.col(1) = sgn * Vec3::Unit(va);
      local.col(2) = sgn * Vec3::Unit(axis);
      Face f;
      f.center = p.center + p.orientation * (sgn * p.extent[axis] * Vec3::Unit(axis));
      f.frame = p.orientation * local;
      f.half_u = p.extent[ua];
      f.half_v = p.extent[va];
      faces.push_back(f);
    }
  }
  return faces;
}

// Splits `total` across weights with the largest-remainder rule.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  double sum = 0;
  for (double w : weights) sum += w;
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rem.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++counts[rem[k % rem.size()].second];
  return counts;
}

double surface_area(const Primitive& p) {
  if (p.kind == PrimitiveKind::Sphere) return 4.0 * std::numbers::pi * p.extent.x() * p.extent.x();
  double a = 0;
  for (const auto& f : faces_of(p)) a += f.area();
  return a;
}

struct Sample {
  Vec3 position;
  Vec3 normal;
};

std::vector<Sample> structured_samples(const Primitive& p, std::size_t n) {
  std::vector<Sample> out;
  out.reserve(n);
  if (p.kind == PrimitiveKind::Sphere) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
      const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double phi = golden * static_cast<double>(i);
      const Vec3 dir = p.orientation * Vec3(std::cos(phi) * r, y, std::sin(phi) * r);
      const Vec3 unit = dir.normalized();
      out.push_back({p.center + p.extent.x() * unit, unit});
    }
    return out;
  }
  const auto faces = faces_of(p);
  std::vector<double> areas;
  for (const auto& f : faces) areas.push_back(f.area());
  const auto counts = apportion(n, areas);
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const auto& f = faces[fi];
    for (std::size_t i = 0; i < counts[fi]; ++i) {
      const Vec2 uv = r2_point(i);
      const Vec3 local((2 * uv.x() - 1) * f.half_u, (2 * uv.y() - 1) * f.half_v, 0.0);
      out.push_back({f.center + f.frame * local, f.frame.col(2)});
    }
  }
  return out;
}

Vec3 random_surface_point(const Primitive& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (p.kind == PrimitiveKind::Sphere) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Vec3 d(n01(rng), n01(rng), n01(rng));
    while (d.norm() < 1e-12) d = Vec3(n01(rng), n01(rng), n01(rng));
    return p.center + p.extent.x() * d.normalized();
  }
  const auto faces = faces_of(p);
  double total = 0;
  for (const auto& f : faces) total += f.area();
  double pick = u01(rng) * total;
  std::size_t fi = 0;
  for (; fi + 1 < faces.size() && pick > faces[fi].area(); ++fi) pick -= faces[fi].area();
  const auto& f = faces[fi];
  const Vec3 local((2 * u01(rng) - 1) * f.half_u, (2 * u01(rng) - 1) * f.half_v, 0.0);
  return f.center + f.frame * local;
}

}  // namespace

SyntheticScene make_synthetic_scene(const SceneSpec& spec) {
  if (spec.primitives.empty()) throw InvalidParameter("make_synthetic_scene: empty primitive list");
  if (!(spec.opacity > 0 && spec.opacity < 1)) throw InvalidParameter("make_synthetic_scene: opacity must be in (0, 1)");
  SyntheticScene out;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t pi = 0; pi < spec.primitives.size(); ++pi) {
    const auto& p = spec.primitives[pi];
    if (p.label < 1) throw InvalidParameter("make_synthetic_scene: labels must be >= 1");
    const bool flat_ok = p.kind == PrimitiveKind::Plane && p.extent.x() > 0 && p.extent.y() > 0;
    if (p.kind == PrimitiveKind::Box && (p.extent.array() <= 0).any()) {
      throw InvalidParameter("make_synthetic_scene: non-positive extent");
    }
    if (p.kind == PrimitiveKind::Plane && !flat_ok) {
      throw InvalidParameter("make_synthetic_scene: non-positive extent");
    }
    if (p.kind == PrimitiveKind::Sphere && !(p.extent.x() > 0)) {
      throw InvalidParameter("make_synthetic_scene: non-positive radius");
    }
    if (p.gaussian_count == 0) continue;
    const double spacing = std::sqrt(surface_area(p) / static_cast<double>(p.gaussian_count));
    const double tangent = spec.tangent_scale * spacing;
    const Vec3 log_scale(std::log(tangent), std::log(tangent), std::log(spec.flatness * tangent));
    for (const auto& s : structured_samples(p, p.gaussian_count)) {
      const Vec4 q = matrix_to_quat(frame_with_normal(s.normal));
      out.scene.push_back(s.position, q, log_scale, logit(spec.opacity), p.color);
      out.labels.push_back(p.label);
      out.object_ids.push_back(static_cast<std::int32_t>(pi + 1));
    }
    for (std::size_t k = 0; k < p.cloud_count; ++k) {
      const Vec3 x = random_surface_point(p, rng);
      out.cloud.insert(out.cloud.end(), {x.x(), x.y(), x.z()});
      out.cloud_labels.push_back(p.label);
    }
  }
  return out;
}

std::vector<Camera> ring_cameras(int count, double radius, double elevation, const Vec3& target,
                                 int width, int height, double focal, double phase) {
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    const double theta = phase + 2.0 * std::numbers::pi * i / count;
    const Vec3 eye = target + Vec3(radius * std::sin(theta), elevation, radius * std::cos(theta));
    cams.push_back(Camera::look_at(width, height, focal, focal, eye, target, Vec3::UnitY()));
  }
  return cams;
}

std::vector<Eigen::VectorXd> orthonormal_codes(int count, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd v(dim);
    for (int c = 0; c < dim; ++c) v[c] = n01(rng);
    if (count <= dim) {
      for (const auto& u : out) v -= u * u.dot(v);
    }
    out.push_back(v.normalized());
  }
  return out;
}

std::vector<std::string> preset_names() { return {"two-spheres", "room-plane-boxes", "plane"}; }

Preset make_preset(const std::string& name) {
  Preset p;
  p.name = name;
  constexpr int kDim = 16;
  constexpr int kRes = 64;
  if (name == "two-spheres") {
    Primitive a;
    a.kind = PrimitiveKind::Sphere;
    a.label = 1;
    a.center = Vec3(-0.45, 0.0, 0.0);
    a.extent = Vec3(0.35, 0.35, 0.35);
    a.color = Vec3(0.9, 0.15, 0.1);
    a.gaussian_count = 600;
    a.cloud_count = 3000;
    Primitive b = a;
    b.label = 2;
    b.center = Vec3(0.45, 0.0, 0.0);
    b.color = Vec3(0.1, 0.2, 0.9);
    p.spec.primitives = {a, b};
    p.spec.seed = 11;
    const Vec3 target = Vec3::Zero();
    auto upper = ring_cameras(6, 2.4, 0.9, target, kRes, kRes, 70.0, 0.0);
    auto lower = ring_cameras(6, 2.4, -0.9, target, kRes, kRes, 70.0, std::numbers::pi / 6);
    for (int i = 0; i < 6; ++i) {
      p.train_cameras.push_back(upper[static_cast<std::size_t>(i)]);
      p.train_cameras.push_back(lower[static_cast<std::size_t>(i)]);
    }
    p.heldout_cameras = ring_cameras(2, 2.5, 0.1, target, kRes, kRes, 70.0, std::numbers::pi / 4);
    p.codebook.tokens = {"red_ball", "blue_ball"};
    p.codebook.vectors = orthonormal_codes(2, kDim, 101);
  } else if (name == "room-plane-boxes") {
    Primitive floor;
    floor.kind = PrimitiveKind::Plane;
    floor.label = 1;
    floor.center = Vec3::Zero();
    // Local z (normal) -> world +y.
    floor.orientation << 1, 0, 0, 0, 0, 1, 0, -1, 0;
    floor.extent = Vec3(1.1, 1.1, 0.0);
    floor.color = Vec3(0.6, 0.55, 0.45);
    floor.gaussian_count = 1200;
    Primitive box1;
    box1.kind = PrimitiveKind::Box;
    box1.label = 2;
    box1.center = Vec3(-0.45, 0.2, 0.1);
    box1.extent = Vec3(0.2, 0.2, 0.2);
    box1.color = Vec3(0.2, 0.7, 0.2);
    box1.gaussian_count = 500;
    Primitive box2 = box1;
    box2.center = Vec3(0.4, 0.15, 0.35);
    box2.extent = Vec3(0.15, 0.15, 0.15);
    box2.color = Vec3(0.15, 0.55, 0.25);
    box2.gaussian_count = 350;
    Primitive ball;
    ball.kind = PrimitiveKind::Sphere;
    ball.label = 3;
    ball.center = Vec3(0.1, 0.25, -0.45);
    ball.extent = Vec3(0.25, 0.25, 0.25);
    ball.color = Vec3(0.9, 0.8, 0.1);
    ball.gaussian_count = 400;
    p.spec.primitives = {floor, box1, box2, ball};
    p.spec.seed = 23;
    p.train_cameras = ring_cameras(10, 2.4, 1.6, Vec3::Zero(), kRes, kRes, 64.0, 0.0);
    p.heldout_cameras = ring_cameras(2, 2.4, 1.4, Vec3::Zero(), kRes, kRes, 64.0, std::numbers::pi / 10);
    p.codebook.tokens = {"floor", "box", "ball"};
    p.codebook.vectors = orthonormal_codes(3, kDim, 202);
  } else if (name == "plane") {
    Primitive plane;
    plane.kind = PrimitiveKind::Plane;
    plane.label = 1;
    plane.extent = Vec3(1.6, 1.6, 0.0);
    plane.color = Vec3(0.7, 0.4, 0.3);
    plane.gaussian_count = 1600;
    p.spec.primitives = {plane};
    p.spec.seed = 31;
    for (int i = 0; i < 4; ++i) {
      const Vec3 shift(0.15 * (i % 2 ? 1 : -1), 0.15 * (i / 2 ? 1 : -1), 0.0);
      p.train_cameras.push_back(
          Camera::look_at(kRes, kRes, 64.0, 64.0, shift + Vec3(0, 0, 2.5), shift, Vec3::UnitY()));
    }
    p.heldout_cameras = {Camera::look_at(kRes, kRes, 64.0, 64.0, Vec3(0, 0, 2.5), Vec3::Zero(), Vec3::UnitY())};
    p.codebook.tokens = {"plane"};
    p.codebook.vectors = orthonormal_codes(1, kDim, 303);
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw LookupError("unknown preset '" + name + "'; available: " + known);
  }
  return p;
}

GaussianScene make_initial_scene(const GaussianScene& reference, const InitOptions& options) {
  if (!(options.position_jitter >= 0) || !(options.min_scale_ratio > 0) || !(options.opacity > 0 && options.opacity < 1)) {
    throw InvalidParameter("make_initial_scene: bad options");
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  GaussianScene out;
  const double op = logit(options.opacity);
  const Vec3 gray = Vec3::Constant(options.gray);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    Vec3 p = reference.pos(i);
    for (int c = 0; c < 3; ++c) p[c] += options.position_jitter * noise(rng);
    Vec3 ls = reference.scale_log(i);
    const int axis = min_scale_axis(ls);
    ls[axis] = std::max(ls[axis], ls.maxCoeff() + std::log(options.min_scale_ratio));
    out.push_back(p, reference.quat(i), ls, op, gray);
  }
  return out;
}

}  // namespace langsurf
