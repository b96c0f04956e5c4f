#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "langsurf/rasterizer.hpp"
#include "langsurf/scene.hpp"

namespace langsurf {

/// Adam moments per parameter group. Arrays are empty until a group first
/// steps; step counts are per group so frozen groups keep their bias
/// correction state.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-15;

  std::array<std::vector<double>, kParamGroupCount> m;
  std::array<std::vector<double>, kParamGroupCount> v;
  std::array<std::int64_t, kParamGroupCount> steps{};

  /// Keeps rows `indices` of every initialized moment array.
  void select(std::span<const std::size_t> indices, std::size_t old_count);

  bool operator==(const AdamState&) const = default;
};

using GroupValues = std::array<double, kParamGroupCount>;
using GroupMask = std::array<bool, kParamGroupCount>;

/// One bias-corrected Adam step on every group with active[g] set.
/// Quaternions are renormalized afterwards, then parameters and moments of
/// the stepped groups are rounded to float32 so that scene files and
/// checkpoints reproduce the state exactly. Throws ShapeError on mismatched
/// gradients and NumericError (naming `source`) on non-finite ones.
void optimizer_step(GaussianScene& scene, AdamState& state, const SceneGradient& grads,
                    const GroupValues& lrs, const GroupMask& active,
                    std::string_view source = "merged gradient");

/// Rounds every parameter to float32.
void round_to_float(GaussianScene& scene);

/// Throws NumericError naming `source` if any value is non-finite.
void require_finite(std::span<const double> values, std::string_view source);

}  // namespace langsurf
