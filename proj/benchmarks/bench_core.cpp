#include <random>

#include <benchmark/benchmark.h>

#include "langsurf/hull.hpp"
#include "langsurf/kdtree.hpp"
#include "langsurf/losses.hpp"
#include "langsurf/rasterizer.hpp"
#include "langsurf/synthetic.hpp"

using namespace langsurf;

namespace {

const SyntheticScene& fixture() {
  static const SyntheticScene scene = make_synthetic_scene(make_preset("two-spheres").spec);
  return scene;
}

Camera fixture_camera(int size) {
  return Camera::look_at(size, size, 1.1 * size, 1.1 * size, Vec3(0.4, 0.9, -2.4), Vec3::Zero(), Vec3::UnitY());
}

std::vector<double> random_xyz(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> xyz(3 * n);
  for (auto& v : xyz) v = g(rng);
  return xyz;
}

void BM_RenderForward(benchmark::State& state) {
  const Camera cam = fixture_camera(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(render(fixture().scene, cam, Channels::All));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_RenderForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state) {
  const Camera cam = fixture_camera(static_cast<int>(state.range(0)));
  const RenderOutput out = render(fixture().scene, cam, Channels::All);
  GradMaps maps;
  maps.color = FloatImage(cam.height, cam.width, 3, 1e-3);
  maps.lang = FloatImage(cam.height, cam.width, 3, 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(render_backward(fixture().scene, cam, out, maps));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_RenderBackward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_KnnGraph(benchmark::State& state) {
  const auto xyz = random_xyz(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(knn_graph(xyz, 8));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KnnGraph)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_LossS3d(benchmark::State& state) {
  const GaussianScene& s = fixture().scene;
  const auto graph = knn_graph(s.position, 8);
  for (auto _ : state) benchmark::DoNotOptimize(loss_s3d(s, graph, 8));
}
BENCHMARK(BM_LossS3d)->Unit(benchmark::kMicrosecond);

void BM_Hull(benchmark::State& state) {
  const auto xyz = random_xyz(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_hull_xyz(xyz));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Hull)->Arg(1000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
