#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "langsurf/image.hpp"
#include "langsurf/query.hpp"

namespace langsurf {

/// |pred & gt| / |pred | gt|; 1 when both are empty.
double iou(const BoolImage& pred, const BoolImage& gt);

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  bool empty_prediction = false;
};

/// Points within strictly less than `tau` of the other set count as matched.
/// Both sets empty: InvalidParameter. Empty prediction: P = 0, F = 0.
FScore semantic_fscore(std::span<const double> pred_xyz, std::span<const double> gt_xyz, double tau);

/// Per-point match flags (nearest distance < tau) via the k-d tree.
std::vector<std::uint8_t> matched_within(std::span<const double> from_xyz, std::span<const double> to_xyz,
                                         double tau);

/// Arithmetic means; empty input is InvalidParameter.
double macc(std::span<const std::uint8_t> hits);
double miou(std::span<const double> ious);

/// Per pixel, the index of the highest score (ties: lowest index), or -1
/// when that score is below `floor` or, with a gate, when gate < gate_min.
LabelImage assign_argmax(std::span<const FloatImage> scores, double floor = 0.5, const FloatImage* gate = nullptr,
                         double gate_min = 0.5);

struct MetricRow {
  std::string scene;
  std::string query;
  std::string metric;
  double value = 0.0;
  bool flagged = false;  ///< e.g. F-score of an empty selection
};

struct EvalReport {
  std::vector<MetricRow> rows;

  void add(std::string scene, std::string query, std::string metric, double value, bool flagged = false);
  /// Mean over rows with `metric` (finite values only).
  double mean(const std::string& metric) const;
  /// CSV `scene,query,metric,value`.
  void write_csv(const std::filesystem::path& path) const;
  std::string csv() const;
  void print_table(std::ostream& out) const;
};

}  // namespace langsurf
