#include <doctest.h>

#include <map>
#include <numeric>

#include "common.hpp"
#include "langsurf/error.hpp"
#include "langsurf/losses.hpp"

using namespace langsurf;
using namespace testutil;

namespace {

GaussianScene lang_scene(const std::vector<Vec3>& pos, const std::vector<Vec3>& lang) {
  GaussianScene s;
  for (std::size_t i = 0; i < pos.size(); ++i)
    s.push_back(pos[i], Vec4(1, 0, 0, 0), Vec3::Constant(-2), 0.0, Vec3::Ones(), lang[i], Vec3::Zero());
  return s;
}

LabelImage mask_image(int h, int w, std::vector<std::int32_t> ids) {
  LabelImage m(h, w, 1);
  m.data = std::move(ids);
  return m;
}

void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * g[i];
}

}  // namespace

TEST_CASE("L_rgb values") {
  const FloatImage a = random_image(4, 4, 3, 1), b = random_image(4, 4, 3, 2);
  CHECK(loss_rgb(a, a).value == 0.0);
  CHECK(loss_rgb(FloatImage(4, 4, 3, 0.5), FloatImage(4, 4, 3, 0.0)).value == doctest::Approx(0.5));
  double oracle = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) oracle += std::abs(a.data[i] - b.data[i]);
  CHECK(std::abs(loss_rgb(a, b).value - oracle / 48) < 1e-7);
  const LossReport same = loss_rgb(a, a);
  for (double g : same.grad("rendered")) CHECK(g == 0.0);
  CHECK_THROWS_AS(loss_rgb(a, FloatImage(4, 3, 3)), ShapeError);
}

TEST_CASE("L_flat values") {
  GaussianScene one;
  one.push_back(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(std::log(0.1), std::log(0.2), std::log(0.3)), 0, Vec3::Ones());
  CHECK(loss_flat(one).value == doctest::Approx(0.1));
  const LossReport single = loss_flat(one);
  CHECK(single.grad("log_scale")[0] == doctest::Approx(0.1));
  CHECK(single.grad("log_scale")[1] == 0.0);
  CHECK(single.grad("log_scale")[2] == 0.0);

  GaussianScene two = one;
  two.push_back(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(std::log(0.5), std::log(0.3), std::log(0.4)), 0, Vec3::Ones());
  CHECK(loss_flat(two).value == doctest::Approx(0.2));

  GaussianScene tiny;
  tiny.push_back(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(-40, 0, 0), 0, Vec3::Ones());
  CHECK(loss_flat(tiny).value < 1e-15);

  GaussianScene tie;
  tie.push_back(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(-1, -1, 0), 0, Vec3::Ones());
  const LossReport tied = loss_flat(tie);
  const auto& g = tied.grad("log_scale");
  CHECK(g[0] > 0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("L_geo values") {
  DepthNormals ref;
  ref.normal = FloatImage(4, 4, 3);
  ref.valid.assign(16, 1);
  FloatImage rendered(4, 4, 3);
  for (std::size_t p = 0; p < 16; ++p) {
    ref.normal.pixel(p)[2] = -1;
    rendered.pixel(p)[0] = 1;
  }
  CHECK(loss_geo(rendered, ref).value == doctest::Approx(1.0));
  for (std::size_t p = 0; p < 16; ++p) rendered.pixel(p)[0] = 0, rendered.pixel(p)[2] = -2;
  CHECK(loss_geo(rendered, ref).value == doctest::Approx(0.0));

  RenderOutput empty = render(GaussianScene{}, small_camera(), Channels::All);
  const LossReport r = loss_geo(empty, small_camera());
  CHECK(r.value == 0.0);
  for (double g : r.grad("normal")) CHECK(g == 0.0);
}

TEST_CASE("depth normals of a fronto-parallel plane face the camera") {
  Camera cam;
  cam.width = cam.height = 16;
  cam.fx = cam.fy = 20;
  cam.cx = cam.cy = 7.5;
  GaussianScene s;
  s.push_back(Vec3(0, 0, 2), Vec4(1, 0, 0, 0), Vec3(std::log(3.0), std::log(3.0), std::log(0.01)), logit(0.99),
              Vec3::Ones());
  const RenderOutput r = render(s, cam, Channels::All);
  const DepthNormals dn = depth_normals(r, cam);
  std::size_t valid = 0;
  for (std::size_t p = 0; p < dn.valid.size(); ++p) {
    if (!dn.valid[p]) continue;
    ++valid;
    CHECK(std::abs(dn.normal.pixel(p)[2] + 1) < 1e-9);
  }
  CHECK(valid == 14 * 14);
  CHECK(loss_geo(r, cam).value < 1e-3);
}

TEST_CASE("L_sem_l2 values") {
  const FloatImage a = random_image(4, 4, 3, 3), b = random_image(4, 4, 3, 4);
  CHECK(loss_sem_l2(a, a).value == 0.0);
  FloatImage shifted = a;
  for (auto& v : shifted.data) v += 1;
  CHECK(loss_sem_l2(shifted, a).value == doctest::Approx(1.0));
  double oracle = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) oracle += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  CHECK(std::abs(loss_sem_l2(a, b).value - oracle / 48) < 1e-7);
}

TEST_CASE("L_sg values") {
  FloatImage two(1, 2, 3);
  two.at(1, 0, 0) = 1;
  CHECK(loss_sg(two, mask_image(1, 2, {1, 1})).value == doctest::Approx(1.0));

  FloatImage constant(2, 3, 3, 0.3);
  CHECK(loss_sg(constant, mask_image(2, 3, {1, 1, 2, 2, 2, 0})).value == 0.0);
  CHECK(loss_sg(random_image(1, 2, 3, 5), mask_image(1, 2, {1, 2})).value == 0.0);

  const FloatImage f = random_image(2, 3, 3, 6, -1, 1);
  double sum = 0;
  int pairs = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b, ++pairs) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d += std::pow(f.pixel(a)[c] - f.pixel(b)[c], 2);
      sum += std::sqrt(d);
    }
  CHECK(pairs == 15);
  const LabelImage six = mask_image(2, 3, {1, 1, 1, 1, 1, 1});
  CHECK(std::abs(loss_sg(f, six).value - sum / 15) < 1e-6);

  // Relabeling the ids leaves the value alone, also when sampling.
  const FloatImage big = random_image(6, 6, 3, 7);
  LabelImage ids(6, 6, 1), swapped(6, 6, 1);
  for (std::size_t p = 0; p < 36; ++p) {
    ids.data[p] = p < 20 ? 1 : 2;
    swapped.data[p] = p < 20 ? 2 : 1;
  }
  CHECK(loss_sg(big, ids, 50, 3).value == loss_sg(big, swapped, 50, 3).value);
  CHECK(loss_sg(big, ids, 50, 3).value == loss_sg(big, ids, 50, 3).value);
  CHECK(loss_sg(big, ids).value == loss_sg(big, swapped).value);
}

TEST_CASE("L_s3d values") {
  const GaussianScene same = lang_scene({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0)},
                                        {Vec3(0.2, -0.1, 0.4), Vec3(0.2, -0.1, 0.4), Vec3(0.2, -0.1, 0.4)});
  CHECK(std::abs(loss_s3d(same, 2).value) < 1e-15);

  const GaussianScene pair = lang_scene({Vec3(0, 0, 0), Vec3(1, 0, 0)},
                                        {Vec3(std::log(0.5), std::log(0.25), std::log(0.25)),
                                         Vec3(std::log(0.25), std::log(0.5), std::log(0.25))});
  CHECK(std::abs(loss_s3d(pair, 1).value - 0.25 * std::log(2.0)) < 1e-9);
  CHECK(std::abs(loss_s3d(pair, 1).value - 0.17329) < 1e-5);
  CHECK_THROWS_AS(loss_s3d(pair, 2), InvalidParameter);
  CHECK_THROWS_AS(loss_s3d(pair, 0), InvalidParameter);

  const GaussianScene s = small_scene(3, 12);
  const double v = loss_s3d(s, 3).value;
  CHECK(v >= 0.0);
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  CHECK(std::abs(loss_s3d(s.select(perm), 3).value - v) < 1e-12);

  const Vec3 p = feature_distribution(Vec3(-100, 0, 0));
  CHECK(p[0] == kS3dFloor);
}

TEST_CASE("instance means") {
  FloatImage f(1, 3, 3);
  f.at(0, 0, 0) = 1;
  f.at(1, 0, 0) = 3;
  f.at(2, 0, 1) = 5;
  const auto z = instance_mean(f, mask_image(1, 3, {1, 1, 2}));
  REQUIRE(z.size() == 2);
  CHECK(z[0] == Vec3(2, 0, 0));
  CHECK(z[1] == Vec3(0, 5, 0));

  for (const auto& m : instance_mean(FloatImage(3, 3, 3, 0.7), mask_image(3, 3, {1, 2, 3, 1, 2, 3, 0, 0, 1})))
    CHECK((m - Vec3::Constant(0.7)).norm() < 1e-15);

  const FloatImage r = random_image(5, 5, 3, 8);
  LabelImage ids(5, 5, 1);
  std::mt19937_64 rng(2);
  for (auto& v : ids.data) v = static_cast<int>(rng() % 4);
  for (int j = 1; j <= 3; ++j) ids.data[j] = j;
  const auto means = instance_mean(r, ids);
  for (int j = 1; j <= 3; ++j) {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    for (std::size_t p = 0; p < 25; ++p)
      if (ids.data[p] == j) sum += Vec3(r.pixel(p)[0], r.pixel(p)[1], r.pixel(p)[2]), ++n;
    CHECK((means[j - 1] - sum / n).norm() < 1e-6);
  }
}

TEST_CASE("L_icd values") {
  const std::vector<Vec3> far = {Vec3(0, 0, 0), Vec3(0.6, 0, 0)};
  CHECK(loss_icd(far, 0.5).value == 0.0);
  const std::vector<Vec3> same = {Vec3(0.1, 0.2, 0.3), Vec3(0.1, 0.2, 0.3)};
  const LossReport r = loss_icd(same, 0.5);
  CHECK(r.value == doctest::Approx(0.5));
  const auto& g = r.grad("z");
  // The two means are pushed apart along (1,1,1).
  CHECK(g[0] == doctest::Approx(g[1]));
  CHECK(g[0] * g[3] < 0);
  const std::vector<Vec3> three = {Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(0.5, 0, 0)};
  // Pairwise distances 0, 0.5, 0.5: only the coincident pair is inside the margin.
  CHECK(loss_icd(three, 0.5).value == doctest::Approx(0.5 / 3));
  const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(loss_icd(line, 0.5).value == doctest::Approx(1.0 / 6));
  CHECK(loss_icd(std::vector<Vec3>{Vec3::Zero()}, 0.5).value == 0.0);
  CHECK_THROWS_AS(loss_icd(far, 0.0), InvalidParameter);

  const FloatImage f = random_image(3, 3, 3, 9);
  const LabelImage a = mask_image(3, 3, {1, 1, 2, 2, 3, 3, 0, 1, 2});
  const LabelImage b = mask_image(3, 3, {3, 3, 1, 1, 2, 2, 0, 3, 1});
  CHECK(loss_icd_map(f, a, 2.0).value == doctest::Approx(loss_icd_map(f, b, 2.0).value));
  CHECK(loss_icd_map(f, LabelImage(3, 3, 1), 2.0).value == 0.0);
}

TEST_CASE("a small step along each gradient does not increase the loss") {
  const double lr = 1e-4;
  const FloatImage a = random_image(4, 4, 3, 10), b = random_image(4, 4, 3, 11);
  const LabelImage ids = mask_image(4, 4, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 0, 0, 3, 3, 0, 0});
  auto descend = [&](auto fn, FloatImage x) {
    const LossReport r = fn(x);
    step(x.data, r.grad("rendered"), lr);
    return std::pair{r.value, fn(x).value};
  };
  for (auto [before, after] : {descend([&](const FloatImage& x) { return loss_rgb(x, b); }, a),
                               descend([&](const FloatImage& x) { return loss_sem_l2(x, b); }, a),
                               descend([&](const FloatImage& x) { return loss_sg(x, ids); }, a),
                               descend([&](const FloatImage& x) { return loss_icd_map(x, ids, 2.0); }, a)})
    CHECK(after <= before);

  GaussianScene s = small_scene(12, 10);
  const LossReport flat = loss_flat(s);
  GaussianScene t = s;
  step(t.group(ParamGroup::LogScale), flat.grad("log_scale"), lr);
  CHECK(loss_flat(t).value <= flat.value);
  const LossReport s3d = loss_s3d(s, 3);
  t = s;
  step(t.group(ParamGroup::FLang), s3d.grad("f_lang"), lr);
  CHECK(loss_s3d(t, 3).value <= s3d.value);
}
