#include "langsurf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "langsurf/camera_io.hpp"
#include "langsurf/error.hpp"
#include "langsurf/ply.hpp"
#include "langsurf/query.hpp"
#include "langsurf/random.hpp"
#include "langsurf/rasterizer.hpp"
#include "langsurf/tensor_io.hpp"

namespace langsurf {
namespace {

FloatImage quantize_rgb(const FloatImage& rgb) {
  FloatImage out = rgb;
  for (auto& v : out.data) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  return out;
}

std::vector<DatasetView> make_views(const Preset& preset, const SyntheticScene& truth,
                                    const std::vector<Camera>& cameras, const DatasetOptions& options,
                                    std::uint64_t split) {
  std::vector<DatasetView> views;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    DatasetView v;
    v.camera = cameras[i];
    v.rgb = quantize_rgb(render(truth.scene, v.camera, Channels::Color).color);
    auto f = make_synthetic_features(truth.scene, truth.labels, truth.object_ids, v.camera, preset.codebook,
                                     options.feature_noise, derive_seed(options.seed, {split, i}));
    for (auto& x : f.feature.data) x = static_cast<double>(static_cast<float>(x));
    v.feature = std::move(f.feature);
    v.masks = std::move(f.masks);
    v.labels = std::move(f.label_map);
    views.push_back(std::move(v));
  }
  return views;
}

std::string view_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

void save_views(const std::filesystem::path& dir, const std::vector<DatasetView>& views) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto stem = dir / view_stem(i);
    const auto& v = views[i];
    write_ppm(stem.string() + ".ppm", v.rgb);
    write_image_tensor(stem.string() + "_feature.lstf", v.feature);
    for (auto h : kHierarchies) {
      write_label_tensor(stem.string() + "_mask_" + hierarchy_letter(h) + ".lstf", v.masks.at(h));
    }
    write_label_tensor(stem.string() + "_labels.lstf", v.labels);
  }
}

std::vector<DatasetView> load_views(const std::filesystem::path& dir, const std::vector<Camera>& cameras) {
  std::vector<DatasetView> views;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const std::string stem = (dir / view_stem(i)).string();
    DatasetView v;
    v.camera = cameras[i];
    v.rgb = read_ppm(stem + ".ppm");
    if (v.rgb.height != v.camera.height || v.rgb.width != v.camera.width) {
      throw ShapeError(stem + ".ppm does not match its camera size");
    }
    v.feature = load_feature_image(stem + "_feature.lstf", v.camera.height, v.camera.width);
    std::vector<std::filesystem::path> mask_paths;
    for (auto h : kHierarchies) mask_paths.push_back(stem + "_mask_" + hierarchy_letter(h) + ".lstf");
    v.masks = load_mask_set(mask_paths, v.camera.height, v.camera.width);
    v.labels = read_label_tensor(stem + "_labels.lstf");
    require_same_hw(v.labels, v.rgb, "labels");
    views.push_back(std::move(v));
  }
  return views;
}

std::vector<double> xyz_of(const PlyTable& t) {
  std::vector<double> xyz(3 * t.count);
  const auto &x = t.column("x"), &y = t.column("y"), &z = t.column("z");
  for (std::size_t i = 0; i < t.count; ++i) {
    xyz[3 * i] = x[i];
    xyz[3 * i + 1] = y[i];
    xyz[3 * i + 2] = z[i];
  }
  return xyz;
}

std::vector<std::int32_t> read_labels_1d(const std::filesystem::path& path, std::size_t expect) {
  const Tensor t = read_tensor(path);
  if (t.dtype != DType::Int32 || t.dims.size() != 1 || t.dims[0] != expect) {
    throw FormatError(path.string() + ": expected " + std::to_string(expect) + " int32 labels");
  }
  return t.i32;
}

void write_labels_1d(const std::filesystem::path& path, const std::vector<std::int32_t>& labels) {
  write_tensor(path, make_i32({static_cast<std::uint32_t>(labels.size())}, labels));
}

std::vector<FeatureView> feature_views(const std::vector<DatasetView>& views) {
  std::vector<FeatureView> out;
  for (const auto& v : views) out.push_back({v.feature, v.masks});
  return out;
}

}  // namespace

Dataset make_dataset(const std::string& preset_name, const DatasetOptions& options) {
  const Preset preset = make_preset(preset_name);
  SyntheticScene truth = make_synthetic_scene(preset.spec);
  Dataset ds;
  ds.name = preset_name;
  ds.codebook = preset.codebook;
  ds.train = make_views(preset, truth, preset.train_cameras, options, 1);
  ds.heldout = make_views(preset, truth, preset.heldout_cameras, options, 2);
  ds.truth = truth.scene;
  for (auto g : kAllParamGroups) {
    for (auto& x : ds.truth.group(g)) x = static_cast<double>(static_cast<float>(x));
  }
  ds.truth_labels = truth.labels;
  ds.truth_objects = truth.object_ids;
  InitOptions init = options.init;
  init.seed = derive_seed(options.seed, {3, init.seed});
  ds.init = make_initial_scene(truth.scene, init);
  for (auto g : kAllParamGroups) {
    for (auto& x : ds.init.group(g)) x = static_cast<double>(static_cast<float>(x));
  }
  ds.cloud = truth.cloud;
  for (auto& x : ds.cloud) x = static_cast<double>(static_cast<float>(x));
  ds.cloud_labels = truth.cloud_labels;
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  save_codebook(dir / "codebook.txt", ds.codebook);
  std::vector<Camera> train, heldout;
  for (const auto& v : ds.train) train.push_back(v.camera);
  for (const auto& v : ds.heldout) heldout.push_back(v.camera);
  save_cameras(dir / "cameras.json", train);
  save_cameras(dir / "heldout_cameras.json", heldout);
  save_scene(ds.truth, dir / "scene_gt.ply");
  write_labels_1d(dir / "labels.lstf", ds.truth_labels);
  write_labels_1d(dir / "objects.lstf", ds.truth_objects);
  save_scene(ds.init, dir / "init.ply");
  PlyTable cloud;
  cloud.names = {"x", "y", "z"};
  cloud.count = ds.cloud.size() / 3;
  for (int c = 0; c < 3; ++c) {
    auto& col = cloud.columns[cloud.names[static_cast<std::size_t>(c)]];
    for (std::size_t i = 0; i < cloud.count; ++i) col.push_back(ds.cloud[3 * i + static_cast<std::size_t>(c)]);
  }
  write_ply_vertices(dir / "cloud.ply", cloud);
  write_labels_1d(dir / "cloud_labels.lstf", ds.cloud_labels);
  save_views(dir / "train", ds.train);
  save_views(dir / "heldout", ds.heldout);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidParameter("dataset directory " + dir.string() + " not found");
  Dataset ds;
  ds.name = dir.filename().string();
  ds.codebook = load_codebook(dir / "codebook.txt");
  ds.train = load_views(dir / "train", load_cameras(dir / "cameras.json"));
  ds.heldout = load_views(dir / "heldout", load_cameras(dir / "heldout_cameras.json"));
  ds.truth = load_scene(dir / "scene_gt.ply");
  ds.truth_labels = read_labels_1d(dir / "labels.lstf", ds.truth.size());
  ds.truth_objects = read_labels_1d(dir / "objects.lstf", ds.truth.size());
  ds.init = load_scene(dir / "init.ply");
  const PlyTable cloud = read_ply_vertices(dir / "cloud.ply");
  ds.cloud = xyz_of(cloud);
  ds.cloud_labels = read_labels_1d(dir / "cloud_labels.lstf", cloud.count);
  return ds;
}

Autoencoder fit_autoencoder(const Dataset& dataset, const TrainConfig& config) {
  const auto views = feature_views(dataset.train);
  const auto samples = pooled_samples(views, config.hierarchy, 2);
  AeTrainOptions opts;
  opts.epochs = static_cast<int>(config.ae_epochs);
  opts.lr = config.ae_lr;
  opts.seed = derive_seed(config.seed, {0x4145u});
  return ae_train(samples, opts);
}

std::vector<TrainView> make_train_views(const Dataset& dataset, const Autoencoder& model) {
  const auto views = feature_views(dataset.train);
  const auto targets = build_targets(views, model);
  std::vector<TrainView> out;
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    TrainView v;
    v.camera = dataset.train[i].camera;
    v.rgb = dataset.train[i].rgb;
    v.latent = targets[i];
    v.masks = dataset.train[i].masks;
    out.push_back(std::move(v));
  }
  return out;
}

EvalReport evaluate_2d(const GaussianScene& scene, const std::vector<DatasetView>& views, const Codebook& codebook,
                       const Autoencoder& model, const std::string& scene_name) {
  EvalReport report;
  std::vector<TextQuery> queries;
  for (const auto& token : codebook.tokens) queries.push_back(embed_query(token, codebook));
  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    const auto& view = views[vi];
    const RenderOutput r = render(scene, view.camera, Channels::Lang);
    std::vector<FloatImage> scores;
    for (const auto& q : queries) scores.push_back(relevancy_2d(r.lang, model, q));
    const LabelImage assigned = assign_argmax(scores, 0.5, &r.alpha, 0.5);
    for (std::size_t k = 0; k < queries.size(); ++k) {
      const std::string tag = queries[k].token + "@view" + std::to_string(vi);
      BoolImage pred(assigned.height, assigned.width, 1), gt(assigned.height, assigned.width, 1);
      BBox box{view.labels.width, view.labels.height, -1, -1};
      for (int y = 0; y < assigned.height; ++y) {
        for (int x = 0; x < assigned.width; ++x) {
          pred.at(x, y) = assigned.at(x, y) == static_cast<int>(k) ? 1 : 0;
          const bool in_gt = view.labels.at(x, y) == static_cast<int>(k) + 1;
          gt.at(x, y) = in_gt ? 1 : 0;
          if (in_gt) {
            box.x0 = std::min(box.x0, x);
            box.y0 = std::min(box.y0, y);
            box.x1 = std::max(box.x1, x);
            box.y1 = std::max(box.y1, y);
          }
        }
      }
      report.add(scene_name, tag, "iou", iou(pred, gt));
      if (box.x1 >= 0) report.add(scene_name, tag, "loc_hit", localize(scores[k], box).hit ? 1.0 : 0.0);
    }
  }
  return report;
}

EvalReport evaluate_3d(const GaussianScene& scene, std::span<const double> cloud,
                       std::span<const std::int32_t> cloud_labels, const Codebook& codebook,
                       const Autoencoder& model, double threshold, double tau, const std::string& scene_name) {
  if (cloud.size() != 3 * cloud_labels.size()) throw ShapeError("evaluate_3d: cloud and labels disagree");
  EvalReport report;
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    const auto query = embed_query(codebook.tokens[k], codebook);
    const auto sel = query_3d(scene, model, query, threshold);
    std::vector<double> pred, gt;
    for (auto i : sel.indices()) pred.insert(pred.end(), scene.position.begin() + 3 * i, scene.position.begin() + 3 * i + 3);
    for (std::size_t i = 0; i < cloud_labels.size(); ++i) {
      if (cloud_labels[i] == static_cast<std::int32_t>(k) + 1) gt.insert(gt.end(), cloud.begin() + 3 * i, cloud.begin() + 3 * i + 3);
    }
    if (pred.empty() && gt.empty()) continue;
    const FScore f = semantic_fscore(pred, gt, tau);
    report.add(scene_name, query.token, "precision", f.precision, f.empty_prediction);
    report.add(scene_name, query.token, "recall", f.recall, f.empty_prediction);
    report.add(scene_name, query.token, "fscore", f.fscore, f.empty_prediction);
  }
  return report;
}

}  // namespace langsurf
