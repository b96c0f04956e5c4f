#pragma once

#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "langsurf/kdtree.hpp"
#include "langsurf/losses.hpp"
#include "langsurf/rasterizer.hpp"

namespace testutil {

inline FloatImage as_image(const std::vector<double>& g, const FloatImage& like) {
  FloatImage out(like.height, like.width, like.channels);
  out.data = g;
  return out;
}

struct LossCase {
  std::string name;
  std::function<double(const GaussianScene&)> value;
  std::function<SceneGradient(const GaussianScene&)> gradient;
};

inline LabelImage two_masks(int size) {
  LabelImage m(size, size, 1, 0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) m.at(x, y) = x < size / 2 ? 1 : (y >= 2 ? 2 : 0);
  return m;
}

inline DepthNormals reference_normals(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  DepthNormals ref;
  ref.normal = FloatImage(size, size, 3);
  ref.valid.assign(static_cast<std::size_t>(size * size), 0);
  for (int y = 1; y + 1 < size; ++y) {
    for (int x = 1; x + 1 < size; ++x) {
      Vec3 n(n01(rng), n01(rng), -2.0 + 0.3 * n01(rng));
      n.normalize();
      for (int c = 0; c < 3; ++c) ref.normal.at(x, y, c) = n[c];
      ref.valid[static_cast<std::size_t>(y * size + x)] = 1;
    }
  }
  return ref;
}

/// Every training loss as a function of the scene, with its analytic
/// scene gradient, on fixed targets sized to `cam`.
inline std::vector<LossCase> loss_cases(const Camera& cam) {
  const int n = cam.height;
  const FloatImage rgb_target = random_image(n, n, 3, 11);
  const FloatImage lang_target = random_image(n, n, 3, 12, -1.0, 1.0);
  const LabelImage masks = two_masks(n);
  const DepthNormals ref = reference_normals(n, 13);

  auto through_render = [cam](Channels ch, auto pick, auto loss, auto assign) {
    LossCase c;
    c.value = [=](const GaussianScene& s) { return loss(pick(render(s, cam, ch))).value; };
    c.gradient = [=](const GaussianScene& s) {
      const RenderOutput r = render(s, cam, ch);
      const LossReport rep = loss(pick(r));
      GradMaps maps;
      assign(maps, rep, r);
      return render_backward(s, cam, r, maps);
    };
    return c;
  };

  std::vector<LossCase> cases;
  {
    auto c = through_render(
        Channels::Color, [](const RenderOutput& r) { return r.color; },
        [rgb_target](const FloatImage& img) { return loss_rgb(img, rgb_target); },
        [](GradMaps& m, const LossReport& rep, const RenderOutput& r) { m.color = as_image(rep.grad("rendered"), r.color); });
    c.name = "rgb";
    cases.push_back(c);
  }
  {
    LossCase c;
    c.name = "flat";
    c.value = [](const GaussianScene& s) { return loss_flat(s).value; };
    c.gradient = [](const GaussianScene& s) {
      SceneGradient g = zero_gradient(s);
      g.log_scale = loss_flat(s).grad("log_scale");
      return g;
    };
    cases.push_back(c);
  }
  {
    auto c = through_render(
        Channels::Color, [](const RenderOutput& r) { return r.normal; },
        [ref](const FloatImage& img) { return loss_geo(img, ref); },
        [](GradMaps& m, const LossReport& rep, const RenderOutput& r) { m.normal = as_image(rep.grad("normal"), r.normal); });
    c.name = "geo";
    cases.push_back(c);
  }
  {
    auto c = through_render(
        Channels::Lang, [](const RenderOutput& r) { return r.lang; },
        [lang_target](const FloatImage& img) { return loss_sem_l2(img, lang_target); },
        [](GradMaps& m, const LossReport& rep, const RenderOutput& r) { m.lang = as_image(rep.grad("rendered"), r.lang); });
    c.name = "sem_l2";
    cases.push_back(c);
  }
  for (std::size_t cap : {std::size_t{1024}, std::size_t{7}}) {
    auto c = through_render(
        Channels::Lang, [](const RenderOutput& r) { return r.lang; },
        [masks, cap](const FloatImage& img) { return loss_sg(img, masks, cap, 5); },
        [](GradMaps& m, const LossReport& rep, const RenderOutput& r) { m.lang = as_image(rep.grad("rendered"), r.lang); });
    c.name = cap > 100 ? "sg exhaustive" : "sg sampled";
    cases.push_back(c);
  }
  {
    LossCase c;
    c.name = "s3d";
    c.value = [](const GaussianScene& s) {
      return loss_s3d(s, knn_graph(s.position, 3), 3).value;
    };
    c.gradient = [](const GaussianScene& s) {
      const auto graph = knn_graph(s.position, 3);
      SceneGradient g = zero_gradient(s);
      g.f_lang = loss_s3d(s, graph, 3).grad("f_lang");
      return g;
    };
    cases.push_back(c);
  }
  {
    auto c = through_render(
        Channels::Ins, [](const RenderOutput& r) { return r.ins; },
        [masks](const FloatImage& img) { return loss_icd_map(img, masks, 10.0); },
        [](GradMaps& m, const LossReport& rep, const RenderOutput& r) { m.ins = as_image(rep.grad("rendered"), r.ins); });
    c.name = "icd";
    cases.push_back(c);
  }
  return cases;
}

}  // namespace testutil
