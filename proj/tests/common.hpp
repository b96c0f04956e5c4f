#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "langsurf/image.hpp"
#include "langsurf/scene.hpp"

namespace testutil {

using namespace langsurf;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("langsurf-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Vec4 random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec4 q(n01(rng), n01(rng), n01(rng), n01(rng));
  return q.normalized();
}

/// Camera looking at the origin from -3 z, 8x8 pixels by default.
inline Camera small_camera(int size = 8, double focal = 20.0) {
  return Camera::look_at(size, size, focal, focal, Vec3(0.1, -0.2, -3.0), Vec3::Zero(), Vec3::UnitY());
}

/// `n` Gaussians near the origin, each covering most of an 8x8 view, with
/// distinct depths, distinct scales and random features.
inline GaussianScene small_scene(std::uint64_t seed, std::size_t n = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GaussianScene s;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 pos(0.15 * u(rng), 0.15 * u(rng), -0.6 + 0.3 * static_cast<double>(i) + 0.05 * u(rng));
    const Vec3 ls(std::log(0.55 + 0.1 * u(rng)), std::log(0.4 + 0.05 * u(rng)), std::log(0.2 + 0.05 * u(rng)));
    const double op = logit(0.35 + 0.2 * (u(rng) + 1.0) / 2.0);
    const Vec3 rgb(0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng));
    const Vec3 lang(u(rng), u(rng), u(rng));
    const Vec3 ins(u(rng), u(rng), u(rng));
    s.push_back(pos, random_unit_quat(rng), ls, op, rgb, lang, ins);
  }
  return s;
}

/// Central differences of f over every value of one parameter group.
inline std::vector<double> numeric_gradient(const GaussianScene& scene, ParamGroup group,
                                            const std::function<double(const GaussianScene&)>& f,
                                            double h = 1e-4) {
  std::vector<double> out(scene.group(group).size());
  GaussianScene work = scene;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double x = scene.group(group)[k];
    work.group(group)[k] = x + h;
    const double fp = f(work);
    work.group(group)[k] = x - h;
    const double fm = f(work);
    work.group(group)[k] = x;
    out[k] = (fp - fm) / (2 * h);
  }
  return out;
}

/// ||a - n|| / max(||a||, ||n||), 0 when both vanish below `floor`.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                             double floor = 1e-9) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nn));
  if (scale < floor) return 0.0;
  return std::sqrt(diff) / scale;
}

inline FloatImage random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  FloatImage img(h, w, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

}  // namespace testutil
