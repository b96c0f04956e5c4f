#include <doctest.h>

#include <map>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "common.hpp"
#include "langsurf/edit.hpp"
#include "langsurf/error.hpp"
#include "langsurf/synthetic.hpp"

using namespace langsurf;
using namespace testutil;

namespace {

std::vector<Vec3> ball_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> out;
  while (out.size() < n) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.norm() <= 1.0) out.push_back(p);
  }
  return out;
}

bool brute_inside(const ConvexHull& h, const Vec3& p) {
  for (std::size_t f = 0; f < h.faces.size(); ++f) {
    const Vec3& a = h.vertices[h.faces[f][0]];
    const Vec3& b = h.vertices[h.faces[f][1]];
    const Vec3& c = h.vertices[h.faces[f][2]];
    const Vec3 n = (b - a).cross(c - a).normalized();
    if (n.dot(p - a) > 1e-9) return false;
  }
  return true;
}

std::set<std::tuple<double, double, double>> vertex_set(const ConvexHull& h) {
  std::set<std::tuple<double, double, double>> s;
  for (const auto& v : h.vertices) s.emplace(v.x(), v.y(), v.z());
  return s;
}

/// Two-sphere fixture whose latents are the unit axis of each label.
SyntheticScene labelled_spheres() {
  SyntheticScene syn = make_synthetic_scene(make_preset("two-spheres").spec);
  for (std::size_t i = 0; i < syn.scene.size(); ++i)
    for (int c = 0; c < 3; ++c) syn.scene.f_lang[3 * i + c] = c == syn.labels[i] - 1 ? 1.0 : 0.0;
  return syn;
}

TextQuery axis_query(int axis) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
  v[axis] = 1;
  return make_query("axis", v);
}

}  // namespace

TEST_CASE("hull of simple solids") {
  const std::vector<Vec3> tet = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
  const ConvexHull t = build_hull(tet);
  CHECK(t.vertices.size() == 4);
  CHECK(t.faces.size() == 4);
  CHECK(contains(t, Vec3::Zero()));
  CHECK_FALSE(contains(t, Vec3(2 * std::sqrt(3.0), 0, 0)));

  std::vector<Vec3> cube;
  for (int i = 0; i < 8; ++i) cube.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  cube.emplace_back(0.5, 0.5, 0.5);
  const ConvexHull c = build_hull(cube);
  CHECK(c.vertices.size() == 8);
  for (const auto& v : c.vertices) CHECK((v - Vec3(0.5, 0.5, 0.5)).norm() > 0.1);
  CHECK(contains(c, Vec3(0.5, 0.5, 0.5)));
  CHECK(contains(c, Vec3(1, 0.5, 0.5)));
  CHECK_FALSE(contains(c, Vec3(1 + 1e-6, 0.5, 0.5)));
}

TEST_CASE("hull of random points") {
  const auto pts = ball_points(200, 3);
  const ConvexHull h = build_hull(pts);
  // Watertight: every directed edge appears once and its reverse once.
  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : h.faces)
    for (int k = 0; k < 3; ++k) ++edges[{f[k], f[(k + 1) % 3]}];
  for (const auto& [e, n] : edges) {
    CHECK(n == 1);
    CHECK(edges.count({e.second, e.first}) == 1);
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& v : h.vertices) centroid += v;
  centroid /= static_cast<double>(h.vertices.size());
  for (std::size_t f = 0; f < h.faces.size(); ++f) {
    CHECK(h.signed_distance(f, centroid) < 0);
    for (const auto& p : pts) CHECK(h.signed_distance(f, p) <= 1e-9);
  }
  for (const auto& v : h.vertices) CHECK(contains(h, v));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK(contains(h, p) == brute_inside(h, p));
  }

  std::vector<Vec3> shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(5));
  CHECK(vertex_set(build_hull(shuffled)) == vertex_set(h));
}

TEST_CASE("degenerate hull inputs report their rank") {
  const std::vector<Vec3> plane = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(0.3, 0.2, 0)};
  CHECK(affine_rank(plane) == 2);
  try {
    build_hull(plane);
    FAIL("expected an error");
  } catch (const DegenerateHullError& e) {
    CHECK(e.affine_rank() == 2);
  }
  const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2), Vec3(3, 3, 3)};
  CHECK(affine_rank(line) == 1);
  CHECK_THROWS_AS(build_hull(line), DegenerateHullError);
  CHECK_THROWS_AS(build_hull(std::vector<Vec3>{Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}), DegenerateHullError);
}

TEST_CASE("removing one sphere of the fixture") {
  const SyntheticScene syn = labelled_spheres();
  std::size_t count_a = 0, count_b = 0;
  for (auto l : syn.labels) (l == 1 ? count_a : count_b)++;

  const RemovalResult r = remove_object(syn.scene, Autoencoder::identity3(), axis_query(0), 0.85);
  CHECK(r.used_hull);
  CHECK(r.selected == count_a);
  CHECK(r.removed.size() == count_a);
  for (auto i : r.removed) CHECK(syn.labels[i] == 1);
  CHECK(r.scene.size() == count_b);
  r.scene.validate();

  // Without the removed object nothing of it is left to render.
  const Camera cam = make_preset("two-spheres").train_cameras.front();
  GaussianScene only_a = syn.scene.select(r.removed);
  GaussianScene only_b;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < syn.labels.size(); ++i)
    if (syn.labels[i] == 2) keep.push_back(i);
  only_b = syn.scene.select(keep);
  const RenderOutput ra = render(only_a, cam, Channels::Color), rb = render(only_b, cam, Channels::Color);
  const RenderOutput after = render(r.scene, cam, Channels::Color);
  std::size_t object_only = 0;
  for (std::size_t p = 0; p < after.alpha.data.size(); ++p) {
    if (ra.alpha.data[p] > 0.5 && rb.alpha.data[p] < 0.01) {
      ++object_only;
      CHECK(after.alpha.data[p] < 0.1);
    }
  }
  CHECK(object_only > 0);

  const GaussianScene before = syn.scene;
  CHECK_THROWS_AS(remove_object(syn.scene, Autoencoder::identity3(), axis_query(0), 1.01), NoMatchError);
  CHECK(syn.scene == before);
}

TEST_CASE("degenerate selections delete only themselves") {
  GaussianScene s;
  for (int i = 0; i < 6; ++i)
    s.push_back(Vec3(i, 0, 0), Vec4(1, 0, 0, 0), Vec3::Constant(-2), 0.0, Vec3::Ones());
  const std::vector<std::size_t> sel = {0, 2, 5};
  const RemovalResult r = remove_selection(s, sel);
  CHECK_FALSE(r.used_hull);
  CHECK(r.selection_rank == 1);
  CHECK(r.removed == sel);
  CHECK(r.scene.size() == 3);
  CHECK_THROWS_AS(remove_selection(s, std::vector<std::size_t>{}), NoMatchError);
}

TEST_CASE("transplanting objects") {
  const SyntheticScene syn = labelled_spheres();
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < syn.labels.size(); ++i) (syn.labels[i] == 1 ? a : b).push_back(i);

  const TransplantResult copy = transplant(syn.scene, a, GaussianScene{}, SimilarityTransform{});
  CHECK(copy.scene == syn.scene.select(a));
  CHECK(copy.added.size() == a.size());

  SimilarityTransform t;
  t.translation = Vec3(0.25, -1.5, 3);
  const TransplantResult moved = transplant(syn.scene, a, GaussianScene{}, t);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(moved.scene.pos(k) == syn.scene.pos(a[k]) + t.translation);

  SimilarityTransform s2;
  s2.scale = 2;
  s2.rotation = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const TransplantResult scaled = transplant(syn.scene, a, GaussianScene{}, s2);
  for (std::size_t k = 0; k < 10; ++k) {
    for (int c = 0; c < 3; ++c)
      CHECK(std::exp(scaled.scene.scale_log(k)[c]) == doctest::Approx(2 * std::exp(syn.scene.scale_log(a[k])[c])));
    Eigen::SelfAdjointEigenSolver<Mat3> e0(covariance(syn.scene.quat(a[k]), syn.scene.scale_log(a[k])));
    Eigen::SelfAdjointEigenSolver<Mat3> e1(covariance(scaled.scene.quat(k), scaled.scene.scale_log(k)));
    for (int c = 0; c < 3; ++c) CHECK(e1.eigenvalues()[c] == doctest::Approx(4 * e0.eigenvalues()[c]));
    CHECK(scaled.scene.lang(k) == syn.scene.lang(a[k]));
    CHECK(scaled.scene.rgb(k) == syn.scene.rgb(a[k]));
  }

  SimilarityTransform shear;
  shear.rotation(0, 1) = 0.3;
  CHECK_THROWS_AS(transplant(syn.scene, a, GaussianScene{}, shear), InvalidParameter);
  SimilarityTransform mirror;
  mirror.rotation(2, 2) = -1;
  CHECK_THROWS_AS(transplant(syn.scene, a, GaussianScene{}, mirror), InvalidParameter);
  SimilarityTransform negative;
  negative.scale = -1;
  CHECK_THROWS_AS(transplant(syn.scene, a, GaussianScene{}, negative), InvalidParameter);

  // Adding sphere A beside a scene of B and removing it again restores B.
  const GaussianScene dst = syn.scene.select(b);
  SimilarityTransform away;
  away.translation = Vec3(0, 3, 0);
  const TransplantResult merged = transplant(syn.scene, a, dst, away);
  CHECK(merged.scene.size() == dst.size() + a.size());
  const RemovalResult removed = remove_object(merged.scene, Autoencoder::identity3(), axis_query(0), 0.85);
  CHECK(removed.scene.size() == dst.size());
  CHECK(removed.removed == merged.added);
}

TEST_CASE("edit manifest round trip") {
  TempDir dir("edit");
  EditManifest m;
  m.operation = "remove";
  m.query = "red_ball";
  m.threshold = 0.85;
  m.removed = {1, 4, 9};
  m.used_hull = false;
  save_edit_manifest(dir / "edit.json", m);
  const EditManifest r = load_edit_manifest(dir / "edit.json");
  CHECK(r.operation == m.operation);
  CHECK(r.query == m.query);
  CHECK(r.threshold == m.threshold);
  CHECK(r.removed == m.removed);
  CHECK(r.added.empty());
  CHECK(r.used_hull == m.used_hull);
}
