#pragma once

#include <filesystem>
#include <vector>

#include "langsurf/scene.hpp"

namespace langsurf {

/// JSON array of {width, height, fx, fy, cx, cy, world_to_camera: 16 row-major}.
void save_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras);
std::vector<Camera> load_cameras(const std::filesystem::path& path);

}  // namespace langsurf
