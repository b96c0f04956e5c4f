#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "langsurf/config.hpp"
#include "langsurf/hcam.hpp"
#include "langsurf/metrics.hpp"
#include "langsurf/synthetic.hpp"
#include "langsurf/trainer.hpp"

namespace langsurf {

/// Posed view with its ground truth: 8-bit RGB, D-dim features, masks and
/// the category label per pixel (0 = background).
struct DatasetView {
  Camera camera;
  FloatImage rgb;
  FeatureImage feature;
  MaskSet masks;
  LabelImage labels;
};

/// Everything `synth` writes: views, codebook, reference and starting
/// scenes, labeled surface cloud.
struct Dataset {
  std::string name;
  std::vector<DatasetView> train;
  std::vector<DatasetView> heldout;
  Codebook codebook;
  GaussianScene truth;
  std::vector<std::int32_t> truth_labels;
  std::vector<std::int32_t> truth_objects;
  GaussianScene init;
  std::vector<double> cloud;
  std::vector<std::int32_t> cloud_labels;
};

struct DatasetOptions {
  double feature_noise = 0.05;
  std::uint64_t seed = 0;
  InitOptions init;
};

/// Builds a preset; RGB is quantized to 8 bits and features to float32 so
/// the in-memory dataset equals what load_dataset reads back.
Dataset make_dataset(const std::string& preset, const DatasetOptions& options = {});

/// Layout: codebook.txt, cameras.json, heldout_cameras.json, scene_gt.ply,
/// labels.lstf, objects.lstf, init.ply, cloud.ply, cloud_labels.lstf and
/// per view <split>/NNN.ppm, NNN_feature.lstf, NNN_mask_{s,m,l}.lstf,
/// NNN_labels.lstf for the splits train and heldout.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

/// Autoencoder fitted to pooled features of the training views.
Autoencoder fit_autoencoder(const Dataset& dataset, const TrainConfig& config);

/// Training views with latent targets for all three hierarchies.
std::vector<TrainView> make_train_views(const Dataset& dataset, const Autoencoder& model);

/// Per held-out view and codebook token: IoU of the argmax assignment
/// (floor 0.5, pixels with rendered alpha < 0.5 unlabeled) against the
/// ground-truth label map, plus localization hits for labels present in
/// the view. Metrics "iou" and "loc_hit".
EvalReport evaluate_2d(const GaussianScene& scene, const std::vector<DatasetView>& views, const Codebook& codebook,
                       const Autoencoder& model, const std::string& scene_name);

/// Per codebook token: F-score at `tau` between Gaussians selected at
/// `threshold` and the labeled cloud. Metrics "precision", "recall", "fscore".
EvalReport evaluate_3d(const GaussianScene& scene, std::span<const double> cloud,
                       std::span<const std::int32_t> cloud_labels, const Codebook& codebook,
                       const Autoencoder& model, double threshold, double tau, const std::string& scene_name);

}  // namespace langsurf
