#include "langsurf/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "langsurf/error.hpp"
#include "langsurf/kdtree.hpp"

namespace langsurf {

double iou(const BoolImage& pred, const BoolImage& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("iou: mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> matched_within(std::span<const double> from_xyz, std::span<const double> to_xyz,
                                         double tau) {
  const std::size_t n = from_xyz.size() / 3;
  std::vector<std::uint8_t> hit(n, 0);
  if (to_xyz.empty()) return hit;
  const KdTree tree(to_xyz);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 q(from_xyz[3 * i], from_xyz[3 * i + 1], from_xyz[3 * i + 2]);
    const double d = std::sqrt(tree.nearest(q).distance_sq);
    hit[i] = (d < tau) ? 1 : 0;
  }
  return hit;
}

FScore semantic_fscore(std::span<const double> pred_xyz, std::span<const double> gt_xyz, double tau) {
  if (!(tau > 0)) throw InvalidParameter("semantic_fscore: tau must be positive");
  if (pred_xyz.size() % 3 || gt_xyz.size() % 3) throw ShapeError("semantic_fscore: point arrays must be N x 3");
  if (pred_xyz.empty() && gt_xyz.empty()) throw InvalidParameter("semantic_fscore: both point sets are empty");
  FScore f;
  f.empty_prediction = pred_xyz.empty();
  auto mean = [](const std::vector<std::uint8_t>& v) {
    if (v.empty()) return 0.0;
    std::size_t s = 0;
    for (auto x : v) s += x;
    return static_cast<double>(s) / static_cast<double>(v.size());
  };
  f.precision = mean(matched_within(pred_xyz, gt_xyz, tau));
  f.recall = mean(matched_within(gt_xyz, pred_xyz, tau));
  const double sum = f.precision + f.recall;
  f.fscore = sum > 0 ? 2.0 * f.precision * f.recall / sum : 0.0;
  return f;
}

double macc(std::span<const std::uint8_t> hits) {
  if (hits.empty()) throw InvalidParameter("macc: no localization results");
  double s = 0;
  for (auto h : hits) s += h ? 1.0 : 0.0;
  return s / static_cast<double>(hits.size());
}

double miou(std::span<const double> ious) {
  if (ious.empty()) throw InvalidParameter("miou: no IoU values");
  double s = 0;
  for (auto v : ious) s += v;
  return s / static_cast<double>(ious.size());
}

LabelImage assign_argmax(std::span<const FloatImage> scores, double floor, const FloatImage* gate, double gate_min) {
  if (scores.empty()) throw InvalidParameter("assign_argmax: no score maps");
  const auto& first = scores.front();
  for (const auto& s : scores) {
    if (!s.same_shape(first) || s.channels != 1) throw ShapeError("assign_argmax: score maps must share one H x W x 1 shape");
  }
  if (gate) require_same_hw(*gate, first, "assign_argmax gate");
  LabelImage out(first.height, first.width, 1, -1);
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    if (gate && gate->data[p] < gate_min) continue;
    int best = 0;
    for (std::size_t q = 1; q < scores.size(); ++q) {
      if (scores[q].data[p] > scores[static_cast<std::size_t>(best)].data[p]) best = static_cast<int>(q);
    }
    if (scores[static_cast<std::size_t>(best)].data[p] >= floor) out.data[p] = best;
  }
  return out;
}

void EvalReport::add(std::string scene, std::string query, std::string metric, double value, bool flagged) {
  rows.push_back({std::move(scene), std::move(query), std::move(metric), value, flagged});
}

double EvalReport::mean(const std::string& metric) const {
  double s = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.metric == metric && std::isfinite(r.value)) {
      s += r.value;
      ++n;
    }
  }
  if (n == 0) throw InvalidParameter("EvalReport::mean: no rows for metric '" + metric + "'");
  return s / static_cast<double>(n);
}

std::string EvalReport::csv() const {
  std::string out = "scene,query,metric,value\n";
  char buf[64];
  for (const auto& r : rows) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r.value);
    out += r.scene + "," + r.query + "," + r.metric + "," + std::string(buf, ptr) + "\n";
  }
  return out;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write report " + path.string());
  out << csv();
}

void EvalReport::print_table(std::ostream& out) const {
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-18s %-12s %10s\n", "scene", "query", "metric", "value");
  out << line;
  bool any_flag = false;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-18s %-18s %-12s %10.4f%s\n", r.scene.c_str(), r.query.c_str(),
                  r.metric.c_str(), r.value, r.flagged ? " *" : "");
    out << line;
    any_flag = any_flag || r.flagged;
  }
  std::map<std::string, std::pair<double, int>> means;
  for (const auto& r : rows) {
    if (!std::isfinite(r.value)) continue;
    auto& m = means[r.metric];
    m.first += r.value;
    ++m.second;
  }
  for (const auto& [metric, m] : means) {
    std::snprintf(line, sizeof line, "%-18s %-18s %-12s %10.4f\n", "mean", "", metric.c_str(), m.first / m.second);
    out << line;
  }
  if (means.count("iou")) out << "iou of two empty masks counts as 1.\n";
  if (any_flag) out << "* query selected no points; F-score defined as 0.\n";
}

}  // namespace langsurf
