#include <doctest.h>

#include "gradient_cases.hpp"

using namespace langsurf;
using namespace testutil;

TEST_CASE("every loss matches central differences for every parameter group") {
  const Camera cam = small_camera();
  for (std::uint64_t seed : {1u, 2u}) {
    const GaussianScene scene = small_scene(seed, 5);
    for (const auto& lc : loss_cases(cam)) {
      const SceneGradient analytic = lc.gradient(scene);
      CHECK(lc.value(scene) > 0.0);
      for (auto g : kAllParamGroups) {
        const auto numeric = numeric_gradient(scene, g, lc.value);
        const double err = relative_error(analytic.group(g), numeric);
        INFO("loss " << lc.name << ", group " << group_name(g) << ", seed " << seed);
        CHECK(err < 1e-3);
      }
    }
  }
}

TEST_CASE("losses have gradient in the groups they act on") {
  const Camera cam = small_camera();
  const GaussianScene scene = small_scene(3, 5);
  auto norm = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  for (const auto& lc : loss_cases(cam)) {
    const SceneGradient g = lc.gradient(scene);
    INFO("loss " << lc.name);
    if (lc.name == "rgb") {
      CHECK(norm(g.color) > 0);
      CHECK(norm(g.position) > 0);
      CHECK(norm(g.f_lang) == 0);
    } else if (lc.name == "flat") {
      CHECK(norm(g.log_scale) > 0);
      CHECK(norm(g.position) == 0);
    } else if (lc.name == "geo") {
      CHECK(norm(g.rotation) > 0);
      CHECK(norm(g.color) == 0);
    } else if (lc.name == "icd") {
      CHECK(norm(g.f_ins) > 0);
      CHECK(norm(g.f_lang) == 0);
    } else {
      CHECK(norm(g.f_lang) > 0);
      CHECK(norm(g.f_ins) == 0);
    }
  }
}

TEST_CASE("loss gradients with respect to their direct inputs") {
  const FloatImage a = random_image(6, 6, 3, 21, -1, 1);
  const LabelImage masks = [] {
    LabelImage m(6, 6, 1, 0);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) m.at(x, y) = 1 + (x + y) % 3;
    return m;
  }();
  auto check_map = [&](const std::function<LossReport(const FloatImage&)>& f) {
    const LossReport rep = f(a);
    FloatImage work = a;
    std::vector<double> numeric(a.data.size());
    for (std::size_t k = 0; k < a.data.size(); ++k) {
      work.data[k] = a.data[k] + 1e-5;
      const double fp = f(work).value;
      work.data[k] = a.data[k] - 1e-5;
      const double fm = f(work).value;
      work.data[k] = a.data[k];
      numeric[k] = (fp - fm) / 2e-5;
    }
    CHECK(relative_error(rep.grad("rendered"), numeric) < 1e-6);
  };
  check_map([&](const FloatImage& x) { return loss_sg(x, masks, 1024, 0); });
  check_map([&](const FloatImage& x) { return loss_sg(x, masks, 4, 0); });
  check_map([&](const FloatImage& x) { return loss_icd_map(x, masks, 5.0); });

  std::vector<Vec3> means = {Vec3(0.1, 0.2, 0.3), Vec3(-0.2, 0.1, 0.0), Vec3(0.3, -0.1, 0.2)};
  const LossReport rep = loss_icd(means, 1.0);
  std::vector<double> numeric;
  for (std::size_t j = 0; j < means.size(); ++j) {
    for (int c = 0; c < 3; ++c) {
      auto p = means, m = means;
      p[j][c] += 1e-6;
      m[j][c] -= 1e-6;
      numeric.push_back((loss_icd(p, 1.0).value - loss_icd(m, 1.0).value) / 2e-6);
    }
  }
  CHECK(relative_error(rep.grad("z"), numeric) < 1e-6);
}
