#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "langsurf/config.hpp"
#include "langsurf/hcam.hpp"
#include "langsurf/optimizer.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

/// One posed training view. Latent targets and masks are needed from
/// Stage 2 on; `latent[h]` may stay empty for hierarchies not trained.
struct TrainView {
  Camera camera;
  FloatImage rgb;
  std::array<FloatImage, 3> latent;
  MaskSet masks;
};

struct LossRecord {
  std::int64_t iteration = 0;
  int stage = 0;
  std::string name;
  double value = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct TrainState {
  GaussianScene scene;
  AdamState optimizer;
  std::int64_t iteration = 0;        ///< global, across stages
  int stage = 1;                     ///< stage currently running or last run
  std::int64_t stage_iteration = 0;  ///< iterations completed in `stage`
  std::vector<LossRecord> history;
  /// Index of each Gaussian in the scene training started from.
  std::vector<std::size_t> origin;
  /// Cached neighbour graph for the KL loss (N x knn_k).
  std::vector<std::uint32_t> knn_graph;
  std::int64_t knn_k = 0;

  bool operator==(const TrainState&) const = default;
};

/// Float32-rounded starting state.
TrainState make_train_state(GaussianScene scene);

struct TrainHooks {
  /// Checkpoints go to subdirectories of this path when
  /// config.checkpoint_every > 0.
  std::filesystem::path checkpoint_root;
  /// Stop once the stage reaches this iteration count (< 0: run to the end).
  std::int64_t stop_at = -1;
  /// Called once a stage has done its entry setup, before its first iteration.
  std::function<void(const TrainState&)> on_stage_start;
  /// Called after every iteration.
  std::function<void(const TrainState&)> on_iteration;
};

/// Step 1: color L1 + flatten on position, rotation, log_scale, opacity and
/// color, one seeded random view per iteration, opacity pruning.
void train_stage1(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
                  const TrainHooks& hooks = {});
/// Step 2: adds f_lang and the geometry, latent, grouping and neighbour
/// losses. Moments from Step 1 carry over.
void train_stage2(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
                  const TrainHooks& hooks = {});
/// Step 3: f_ins starts as a copy of f_lang; only f_ins is optimized, with
/// the instance margin loss.
void train_stage3(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
                  const TrainHooks& hooks = {});
/// Runs the stages in order, resuming wherever `state` left off.
void train_all(TrainState& state, std::span<const TrainView> views, const TrainConfig& config,
               const TrainHooks& hooks = {});

/// CSV `iteration,stage,loss_name,value`, values printed round-trip exact.
void write_loss_log(const std::filesystem::path& path, std::span<const LossRecord> history);
std::vector<LossRecord> read_loss_log(const std::filesystem::path& path);

/// Checkpoint directory: scene.ply, Adam moment tensors, config.txt,
/// state.json, knn_graph tensor and loss_log.csv.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config);
TrainState load_checkpoint(const std::filesystem::path& dir, TrainConfig* config = nullptr);
/// Name of the checkpoint directory for the given state.
std::string checkpoint_name(const TrainState& state);

}  // namespace langsurf
