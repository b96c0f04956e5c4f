#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "langsurf/hcam.hpp"
#include "langsurf/optimizer.hpp"

namespace langsurf {

struct TrainConfig {
  std::int64_t stage1_iterations = 500;
  std::int64_t stage2_iterations = 1000;
  std::int64_t stage3_iterations = 500;

  GroupValues lr = {1.6e-4, 1e-3, 5e-3, 5e-2, 2.5e-3, 2.5e-3, 2.5e-3};

  double lambda_rgb = 1.0;
  double lambda_flat = 100.0;
  double lambda_geo = 0.05;
  double lambda_sem = 1.0;
  double lambda_sg = 0.1;
  double lambda_s3d = 0.01;
  double lambda_icd = 1.0;

  Hierarchy hierarchy = Hierarchy::Large;
  Hierarchy instance_hierarchy = Hierarchy::Medium;
  std::int64_t knn_k = 8;
  double d_min = 0.5;
  std::int64_t pair_cap = 1024;
  std::int64_t knn_refresh = 100;

  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  ///< 0 disables checkpoints
  double prune_opacity = 0.005;       ///< 0 disables pruning
  std::int64_t prune_every = 500;

  double query_threshold = 0.85;
  std::int64_t ae_epochs = 200;
  double ae_lr = 1e-2;

  /// Iteration counts 7000 / 23000 / 10000.
  void use_paper_schedule();

  /// Throws InvalidParameter on out-of-range values.
  void validate() const;

  /// Sets one key from its text form. Unknown keys raise LookupError
  /// listing the known ones; malformed values raise InvalidParameter.
  void set(const std::string& key, const std::string& value);

  /// Value of `key` in the same text form `set` accepts.
  std::string get(const std::string& key) const;

  bool operator==(const TrainConfig&) const = default;
};

struct ConfigKey {
  std::string key;
  std::string description;
};

/// Every addressable key, in dump order.
const std::vector<ConfigKey>& config_keys();

/// Applies `key = value` lines; '#' starts a comment, blank lines are skipped.
void apply_config_text(TrainConfig& config, const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// All keys as `key = value` lines; parses back to an equal config.
std::string dump_config(const TrainConfig& config);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

/// Splits "key=value" (surrounding whitespace trimmed).
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace langsurf
