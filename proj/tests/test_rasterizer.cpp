#include <doctest.h>

#include <numeric>
#include <thread>

#include "common.hpp"
#include "langsurf/error.hpp"
#include "langsurf/rasterizer.hpp"

using namespace langsurf;
using namespace testutil;

namespace {

Camera axis_camera(int size, double f, double c) {
  Camera cam;
  cam.width = cam.height = size;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = c;
  return cam;
}

GaussianScene one(const Vec3& pos, double opacity, const Vec3& rgb, double scale = 0.1) {
  GaussianScene s;
  s.push_back(pos, Vec4(1, 0, 0, 0), Vec3::Constant(std::log(scale)), logit(opacity), rgb);
  return s;
}

}  // namespace

TEST_CASE("projection of an on-axis Gaussian") {
  const Camera cam = axis_camera(101, 100, 50);
  const GaussianScene s = one(Vec3(0, 0, 2), 0.5, Vec3::Ones(), 0.05);
  const Projection p = project(s, cam);
  REQUIRE(p.visible.size() == 1);
  CHECK((p.visible[0].mean2d - Vec2(50, 50)).norm() < 1e-12);
  const double expect = std::pow(100 * 0.05 / 2, 2) + RasterConstants::kDilation;
  CHECK(std::abs(p.visible[0].cov2d(0, 0) / expect - 1) < 1e-4);
  CHECK(std::abs(p.visible[0].cov2d(1, 1) / expect - 1) < 1e-4);
  CHECK(std::abs(p.visible[0].cov2d(0, 1)) < 1e-12);
  CHECK(std::abs(p.visible[0].depth - 2) < 1e-12);

  const GaussianScene near = one(Vec3(0, 0, 0.005), 0.5, Vec3::Ones());
  CHECK(project(near, cam).visible.empty());
  CHECK(project(near, cam).visible_mask[0] == 0);
  const GaussianScene outside = one(Vec3(50, 0, 2), 0.5, Vec3::Ones());
  CHECK(project(outside, cam).visible.empty());
}

TEST_CASE("off-axis projection covariance matches the Jacobian oracle") {
  const Camera cam = small_camera(32, 40);
  GaussianScene s = small_scene(4, 1);
  const Projection p = project(s, cam);
  REQUIRE(p.visible.size() == 1);
  // Numerical Jacobian of the pixel projection at the mean.
  auto pix = [&](const Vec3& x) {
    const Vec3 t = cam.rotation() * x + cam.translation();
    return Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  };
  Eigen::Matrix<double, 2, 3> j;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = 1e-6;
    j.col(k) = (pix(s.pos(0) + e) - pix(s.pos(0) - e)) / 2e-6;
  }
  Mat2 expect = j * covariance(s.quat(0), s.scale_log(0)) * j.transpose();
  expect.diagonal().array() += RasterConstants::kDilation;
  CHECK((p.visible[0].cov2d - expect).norm() / expect.norm() < 1e-6);
  CHECK((p.visible[0].mean2d - pix(s.pos(0))).norm() < 1e-9);
}

TEST_CASE("single-term and two-term compositing") {
  const Camera cam = axis_camera(9, 10, 4);
  const RenderOutput r1 = render(one(Vec3(0, 0, 2), 0.999, Vec3(1, 0, 0)), cam, Channels::Color);
  CHECK(std::abs(r1.color.at(4, 4, 0) - 0.99) < 1e-12);
  CHECK(r1.color.at(4, 4, 1) == 0.0);
  CHECK(std::abs(r1.alpha.at(4, 4) - 0.99) < 1e-12);

  GaussianScene two = one(Vec3(0, 0, 3), 0.5, Vec3(0, 1, 0));
  const GaussianScene front = one(Vec3(0, 0, 2), 0.5, Vec3(1, 0, 0));
  two.push_back(front.pos(0), front.quat(0), front.scale_log(0), front.opacity_logit[0], front.rgb(0));
  const RenderOutput r2 = render(two, cam, Channels::Color);
  CHECK(std::abs(r2.color.at(4, 4, 0) - 0.5) < 1e-12);
  CHECK(std::abs(r2.color.at(4, 4, 1) - 0.25) < 1e-12);
  CHECK(r2.color.at(4, 4, 2) == 0.0);
  CHECK(std::abs(r2.depth.at(4, 4) - (0.5 * 2 + 0.25 * 3)) < 1e-12);
  CHECK(r2.top_index.at(4, 4) == 1);
}

TEST_CASE("empty scene renders the background") {
  const RenderOutput r = render(GaussianScene{}, small_camera(16), Channels::All);
  for (double v : r.color.data) CHECK(v == 0.0);
  for (double v : r.alpha.data) CHECK(v == 0.0);
  for (double v : r.lang.data) CHECK(v == 0.0);
  for (double v : r.weight_plus_transmittance.data) CHECK(v == 1.0);
  for (auto v : r.top_index.data) CHECK(v == -1);
}

TEST_CASE("weights plus transmittance sum to one") {
  const Camera cam = small_camera(24, 40);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RenderOutput r = render(small_scene(seed, 40), cam, Channels::All);
    for (std::size_t p = 0; p < r.alpha.data.size(); ++p) {
      CHECK(std::abs(r.weight_plus_transmittance.data[p] - 1.0) < 1e-6);
      CHECK(r.alpha.data[p] >= 0.0);
      CHECK(r.alpha.data[p] <= 1.0);
    }
  }
}

TEST_CASE("storage order does not change the image") {
  const Camera cam = small_camera(24, 40);
  const GaussianScene s = small_scene(7, 30);
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  const RenderOutput a = render(s, cam, Channels::All);
  const RenderOutput b = render(s.select(perm), cam, Channels::All);
  auto max_diff = [](const FloatImage& x, const FloatImage& y) {
    double m = 0;
    for (std::size_t i = 0; i < x.data.size(); ++i) m = std::max(m, std::abs(x.data[i] - y.data[i]));
    return m;
  };
  CHECK(max_diff(a.color, b.color) < 1e-6);
  CHECK(max_diff(a.lang, b.lang) < 1e-6);
  CHECK(max_diff(a.ins, b.ins) < 1e-6);
  CHECK(max_diff(a.depth, b.depth) < 1e-6);
  CHECK(max_diff(a.normal, b.normal) < 1e-6);
  CHECK(max_diff(a.alpha, b.alpha) < 1e-6);
}

TEST_CASE("renders are deterministic and safe to run concurrently") {
  const Camera cam = small_camera(32, 40);
  const GaussianScene s = small_scene(8, 50);
  const RenderOutput ref = render(s, cam);
  std::vector<RenderOutput> outs(4);
  std::vector<std::thread> threads;
  for (auto& o : outs) threads.emplace_back([&] { o = render(s, cam); });
  for (auto& t : threads) t.join();
  for (const auto& o : outs) {
    CHECK(o.color.data == ref.color.data);
    CHECK(o.lang.data == ref.lang.data);
  }
  GradMaps maps;
  maps.color = random_image(32, 32, 3, 1);
  const SceneGradient g1 = render_backward(s, cam, ref, maps);
  const SceneGradient g2 = render_backward(s, cam, render(s, cam), maps);
  CHECK(g1 == g2);
}

TEST_CASE("sum of color matches central differences for every parameter") {
  const Camera cam = small_camera();
  const GaussianScene s = small_scene(5, 5);
  const RenderOutput r = render(s, cam, Channels::All);
  GradMaps maps;
  maps.color = FloatImage(8, 8, 3, 1.0);
  const SceneGradient g = render_backward(s, cam, r, maps);
  auto f = [&](const GaussianScene& x) {
    const RenderOutput o = render(x, cam, Channels::Color);
    return std::accumulate(o.color.data.begin(), o.color.data.end(), 0.0);
  };
  for (auto group : kAllParamGroups) {
    const auto numeric = numeric_gradient(s, group, f);
    const auto& analytic = g.group(group);
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      INFO(group_name(group) << "[" << k << "] analytic " << analytic[k] << " numeric " << numeric[k]);
      const double scale = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-6});
      CHECK(std::abs(analytic[k] - numeric[k]) / scale < 1e-3);
    }
  }
}

TEST_CASE("depth, alpha and feature maps differentiate too") {
  const Camera cam = small_camera();
  const GaussianScene s = small_scene(6, 5);
  const FloatImage wd = random_image(8, 8, 1, 2), wa = random_image(8, 8, 1, 3), wl = random_image(8, 8, 3, 4),
                   wi = random_image(8, 8, 3, 5), wn = random_image(8, 8, 3, 6);
  auto f = [&](const GaussianScene& x) {
    const RenderOutput o = render(x, cam, Channels::All);
    double v = 0;
    for (std::size_t i = 0; i < wd.data.size(); ++i) v += wd.data[i] * o.depth.data[i] + wa.data[i] * o.alpha.data[i];
    for (std::size_t i = 0; i < wl.data.size(); ++i)
      v += wl.data[i] * o.lang.data[i] + wi.data[i] * o.ins.data[i] + wn.data[i] * o.normal.data[i];
    return v;
  };
  GradMaps maps{{}, wl, wi, wd, wn, wa};
  const SceneGradient g = render_backward(s, cam, render(s, cam, Channels::All), maps);
  for (auto group : kAllParamGroups) {
    INFO(group_name(group));
    CHECK(relative_error(g.group(group), numeric_gradient(s, group, f)) < 1e-4);
  }
}

TEST_CASE("zero upstream, culled and invisible Gaussians get zero gradient") {
  const Camera cam = small_camera();
  GaussianScene s = small_scene(9, 4);
  s.push_back(Vec3(0, 0, -5), Vec4(1, 0, 0, 0), Vec3::Constant(-2), 0.0, Vec3::Ones(), Vec3::Ones(), Vec3::Ones());
  const RenderOutput r = render(s, cam);
  const SceneGradient zero = render_backward(s, cam, r, GradMaps{});
  for (auto g : kAllParamGroups)
    for (double v : zero.group(g)) CHECK(v == 0.0);

  GradMaps maps;
  maps.color = FloatImage(8, 8, 3, 1.0);
  maps.lang = FloatImage(8, 8, 3, 1.0);
  const SceneGradient g = render_backward(s, cam, r, maps);
  const std::size_t last = s.size() - 1;
  for (auto group : kAllParamGroups) {
    const int w = group_width(group);
    for (int c = 0; c < w; ++c) CHECK(g.group(group)[last * w + c] == 0.0);
  }

  maps.lang = FloatImage(4, 4, 3, 1.0);
  CHECK_THROWS_AS(render_backward(s, cam, r, maps), ShapeError);
}
