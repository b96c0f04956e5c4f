#include <doctest.h>

#include "common.hpp"
#include "langsurf/error.hpp"
#include "langsurf/losses.hpp"
#include "langsurf/trainer.hpp"

using namespace langsurf;
using namespace testutil;

namespace {

std::vector<TrainView> small_views(const GaussianScene& truth, int count = 3, int size = 12) {
  std::vector<TrainView> views;
  for (int i = 0; i < count; ++i) {
    const double a = 0.4 * i;
    TrainView v;
    v.camera = Camera::look_at(size, size, 1.5 * size, 1.5 * size, Vec3(3 * std::sin(a), -0.2, -3 * std::cos(a)),
                               Vec3::Zero(), Vec3::UnitY());
    const RenderOutput r = render(truth, v.camera, Channels::Lang);
    v.rgb = r.color;
    for (auto h : kHierarchies) {
      LabelImage ids(size, size, 1);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) ids.at(x, y) = x < size / 2 ? 1 : 2;
      v.masks.at(h) = ids;
      v.latent[static_cast<int>(h)] = r.lang;
    }
    views.push_back(std::move(v));
  }
  return views;
}

TrainConfig short_config(std::int64_t s1, std::int64_t s2, std::int64_t s3) {
  TrainConfig c;
  c.stage1_iterations = s1;
  c.stage2_iterations = s2;
  c.stage3_iterations = s3;
  c.knn_k = 3;
  c.seed = 17;
  return c;
}

double mean_cluster_kl(const GaussianScene& s, std::size_t cluster) {
  double sum = 0;
  int n = 0;
  for (std::size_t base = 0; base < s.size(); base += cluster)
    for (std::size_t i = base; i < base + cluster; ++i)
      for (std::size_t j = base; j < base + cluster; ++j) {
        if (i == j) continue;
        const Vec3 p = feature_distribution(s.lang(i)), q = feature_distribution(s.lang(j));
        for (int c = 0; c < 3; ++c) sum += p[c] * std::log(p[c] / q[c]);
        ++n;
      }
  return sum / n;
}

}  // namespace

TEST_CASE("optimizer on a scalar quadratic") {
  // Adam moves about lr per step, so a start far from the minimum keeps the
  // whole run on one side of it.
  GaussianScene s;
  s.push_back(Vec3(10, 0, 0), Vec4(1, 0, 0, 0), Vec3::Zero(), 0, Vec3::Zero());
  AdamState adam;
  GroupValues lr{};
  lr.fill(0.1);
  GroupMask active{};
  active[static_cast<int>(ParamGroup::Position)] = true;
  double x = 10, m = 0, v = 0;
  double prev = std::abs(s.position[0]);
  for (int t = 1; t <= 100; ++t) {
    SceneGradient g = zero_gradient(s);
    g.position[0] = 2 * s.position[0];
    optimizer_step(s, adam, g, lr, active);
    const double now = std::abs(s.position[0]);
    CHECK(now < prev);
    prev = now;

    const double gx = 2 * x;
    m = 0.9 * m + 0.1 * gx;
    v = 0.999 * v + 0.001 * gx * gx;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-15);
    CHECK(std::abs(s.position[0] - x) < 1e-4);
  }
  CHECK(adam.steps[static_cast<int>(ParamGroup::Position)] == 100);
  CHECK(adam.steps[static_cast<int>(ParamGroup::Color)] == 0);
}

TEST_CASE("zero gradients leave parameters and only decay moments") {
  GaussianScene s = small_scene(2, 3);
  round_to_float(s);
  AdamState adam;
  GroupValues lr{};
  lr.fill(1e-2);
  GroupMask active{};
  active.fill(true);
  const GaussianScene start = s;
  optimizer_step(s, adam, zero_gradient(s), lr, active);
  CHECK(s == start);

  SceneGradient g = zero_gradient(s);
  for (auto& v : g.color) v = 1.0;
  optimizer_step(s, adam, g, lr, active);
  const AdamState moments = adam;
  optimizer_step(s, adam, zero_gradient(s), lr, active);
  const int c = static_cast<int>(ParamGroup::Color);
  for (std::size_t i = 0; i < adam.m[c].size(); ++i) {
    CHECK(adam.m[c][i] == doctest::Approx(0.9 * moments.m[c][i]).epsilon(1e-6));
    CHECK(adam.v[c][i] == doctest::Approx(0.999 * moments.v[c][i]).epsilon(1e-6));
  }

  SceneGradient bad = zero_gradient(s);
  bad.f_lang[0] = std::nan("");
  CHECK_THROWS_AS(optimizer_step(s, adam, bad, lr, active, "loss_x"), NumericError);
  bad.f_lang.pop_back();
  CHECK_THROWS_AS(optimizer_step(s, adam, bad, lr, active), ShapeError);
}

TEST_CASE("zero-iteration stages are no-ops") {
  const GaussianScene truth = small_scene(3, 12);
  const auto views = small_views(truth);
  TrainState state = make_train_state(small_scene(4, 12));
  const TrainState before = state;
  train_stage1(state, views, short_config(0, 0, 0));
  CHECK(state.scene == before.scene);
  CHECK(state.history.empty());
  train_all(state, views, short_config(0, 0, 0));
  CHECK(state.scene == before.scene);
  CHECK(state.optimizer == before.optimizer);

  TrainState s1 = make_train_state(small_scene(4, 12));
  CHECK_THROWS_AS(train_stage1(s1, {}, short_config(5, 0, 0)), InvalidParameter);
  std::vector<TrainView> no_targets = views;
  for (auto& v : no_targets) v.latent = {};
  TrainState s2 = make_train_state(small_scene(4, 12));
  CHECK_THROWS_AS(train_stage2(s2, no_targets, short_config(0, 5, 0)), InvalidParameter);
}

TEST_CASE("the semantic term alone drives the rendered latent to its target") {
  Camera cam;
  cam.width = cam.height = 8;
  cam.fx = cam.fy = 10;
  cam.cx = cam.cy = 3.5;
  GaussianScene s;
  s.push_back(Vec3(0, 0, 2), Vec4(1, 0, 0, 0), Vec3(std::log(20.0), std::log(20.0), std::log(0.01)),
              logit(0.999), Vec3::Constant(0.5));
  TrainView v;
  v.camera = cam;
  v.rgb = FloatImage(8, 8, 3, 0.5);
  const Vec3 target(0.3, -0.2, 0.5);
  v.latent[2] = FloatImage(8, 8, 3);
  for (std::size_t p = 0; p < 64; ++p)
    for (int c = 0; c < 3; ++c) v.latent[2].pixel(p)[c] = target[c];
  v.masks.at(Hierarchy::Large) = LabelImage(8, 8, 1, 1);

  TrainConfig c = short_config(0, 200, 0);
  c.lambda_rgb = c.lambda_flat = c.lambda_geo = c.lambda_sg = c.lambda_s3d = 0;
  c.lambda_sem = 1;
  c.lr[static_cast<int>(ParamGroup::FLang)] = 2e-2;
  TrainState state = make_train_state(s);
  train_all(state, std::span(&v, 1), c);
  const RenderOutput r = render(state.scene, cam, Channels::Lang);
  for (std::size_t p = 0; p < 64; ++p)
    for (int k = 0; k < 3; ++k) CHECK(std::abs(r.lang.pixel(p)[k] - target[k]) < 1e-2);
  CHECK(state.history.back().name == "total");
}

TEST_CASE("the neighbour term alone aligns features within clusters") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  GaussianScene s;
  for (int cl = 0; cl < 2; ++cl)
    for (int i = 0; i < 6; ++i)
      s.push_back(Vec3(cl * 10.0 + 0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng)), Vec4(1, 0, 0, 0), Vec3::Constant(-3),
                  0.0, Vec3::Ones(), Vec3(g(rng), g(rng), g(rng)), Vec3::Zero());
  const auto views = small_views(small_scene(3, 12), 1);
  TrainConfig c = short_config(0, 200, 0);
  c.lambda_rgb = c.lambda_flat = c.lambda_geo = c.lambda_sg = c.lambda_sem = 0;
  c.lambda_s3d = 1;
  c.knn_k = 3;
  c.lr[static_cast<int>(ParamGroup::FLang)] = 1e-2;
  TrainState state = make_train_state(s);
  std::vector<double> logged{mean_cluster_kl(state.scene, 6)};
  TrainHooks hooks;
  hooks.on_iteration = [&](const TrainState& st) {
    if (st.stage_iteration % 20 == 0) logged.push_back(mean_cluster_kl(st.scene, 6));
  };
  train_all(state, views, c, hooks);
  REQUIRE(logged.size() == 11);
  for (std::size_t i = 1; i < logged.size(); ++i) CHECK(logged[i] <= logged[i - 1] + 1e-6);
  CHECK(logged.back() < 0.5 * logged.front());
}

TEST_CASE("stage 3 copies language features and freezes everything else") {
  const GaussianScene truth = small_scene(5, 12);
  const auto views = small_views(truth);
  TrainConfig c = short_config(5, 5, 0);
  TrainState state = make_train_state(small_scene(6, 12));
  train_all(state, views, c);
  for (auto& v : state.scene.f_ins) v = 0.25;
  const GaussianScene entry = state.scene;

  c.stage3_iterations = 30;
  bool started = false;
  TrainHooks hooks;
  hooks.on_stage_start = [&](const TrainState& st) {
    started = true;
    CHECK(st.stage == 3);
    CHECK(st.scene.f_ins == entry.f_lang);
  };
  TrainState probe = state;
  train_stage3(probe, views, c, hooks);
  CHECK(started);

  c.stage3_iterations = 30;
  TrainState run = state;
  train_stage3(run, views, c);
  CHECK(run.scene.f_ins != entry.f_lang);
  std::vector<ParamGroup> others;
  for (auto g : kAllParamGroups)
    if (g != ParamGroup::FIns) others.push_back(g);
  CHECK(hash_groups(run.scene, others) == hash_groups(entry, others));
  for (auto g : others) CHECK(run.scene.group(g) == entry.group(g));
  for (const auto& rec : run.history)
    if (rec.stage == 3) CHECK(std::isfinite(rec.value));
}

TEST_CASE("runs are deterministic and resume bit-identically from checkpoints") {
  const GaussianScene truth = small_scene(7, 12);
  const auto views = small_views(truth);
  TrainConfig c = short_config(20, 20, 20);
  c.checkpoint_every = 10;
  c.prune_every = 10;
  TempDir dir("trainer");

  TrainState a = make_train_state(small_scene(8, 12));
  TrainHooks hooks;
  hooks.checkpoint_root = dir / "a";
  train_all(a, views, c, hooks);
  TrainState b = make_train_state(small_scene(8, 12));
  train_all(b, views, c);
  CHECK(a == b);
  CHECK(a.iteration == 60);
  CHECK(a.stage == 3);

  for (const char* name : {"ckpt-00000010-stage1", "ckpt-00000030-stage2", "ckpt-00000050-stage3"}) {
    INFO(name);
    REQUIRE(std::filesystem::exists(dir / "a" / name / "scene.ply"));
    TrainConfig loaded;
    TrainState resumed = load_checkpoint(dir / "a" / name, &loaded);
    CHECK(loaded == c);
    train_all(resumed, views, loaded);
    CHECK(resumed.scene == a.scene);
    CHECK(resumed.optimizer == a.optimizer);
    CHECK(resumed.history == a.history);
    CHECK(resumed.origin == a.origin);
  }

  write_loss_log(dir / "log.csv", a.history);
  CHECK(read_loss_log(dir / "log.csv") == a.history);
  for (const auto& r : a.history) CHECK(std::isfinite(r.value));
}
