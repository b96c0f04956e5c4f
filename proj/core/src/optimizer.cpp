#include "langsurf/optimizer.hpp"

#include <cmath>
#include <string>

#include "langsurf/error.hpp"

namespace langsurf {
namespace {

double to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

void round_all(std::vector<double>& values) {
  for (auto& x : values) x = to_float(x);
}

}  // namespace

void AdamState::select(std::span<const std::size_t> indices, std::size_t old_count) {
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto width = static_cast<std::size_t>(group_width(kAllParamGroups[g]));
    for (auto* buf : {&m[g], &v[g]}) {
      if (buf->empty()) continue;
      if (buf->size() != old_count * width) throw ShapeError("AdamState::select: moment size mismatch");
      std::vector<double> kept;
      kept.reserve(indices.size() * width);
      for (auto i : indices) kept.insert(kept.end(), buf->begin() + i * width, buf->begin() + (i + 1) * width);
      *buf = std::move(kept);
    }
  }
}

void require_finite(std::span<const double> values, std::string_view source) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite value in " + std::string(source) + " at entry " + std::to_string(i));
    }
  }
}

void round_to_float(GaussianScene& scene) {
  for (auto g : kAllParamGroups) round_all(scene.group(g));
}

void optimizer_step(GaussianScene& scene, AdamState& state, const SceneGradient& grads,
                    const GroupValues& lrs, const GroupMask& active, std::string_view source) {
  for (int gi = 0; gi < kParamGroupCount; ++gi) {
    if (!active[gi]) continue;
    const ParamGroup g = kAllParamGroups[gi];
    auto& param = scene.group(g);
    const auto& grad = grads.group(g);
    if (grad.size() != param.size()) {
      throw ShapeError("optimizer_step: gradient for " + std::string(group_name(g)) + " has " +
                       std::to_string(grad.size()) + " values, parameters have " + std::to_string(param.size()));
    }
    if (!(lrs[gi] > 0) || !std::isfinite(lrs[gi])) {
      throw InvalidParameter("optimizer_step: learning rate for " + std::string(group_name(g)) + " must be positive");
    }
    require_finite(grad, std::string(source) + " (" + std::string(group_name(g)) + ")");

    auto& m = state.m[gi];
    auto& v = state.v[gi];
    if (m.size() != param.size()) m.assign(param.size(), 0.0);
    if (v.size() != param.size()) v.assign(param.size(), 0.0);
    const std::int64_t t = ++state.steps[gi];
    const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(t));
    const double lr = lrs[gi];
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * grad[i];
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      param[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEpsilon);
    }
    if (g == ParamGroup::Rotation) scene.normalize_rotations();
    round_all(param);
    round_all(m);
    round_all(v);
  }
}

}  // namespace langsurf
