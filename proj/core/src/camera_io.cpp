#include "langsurf/camera_io.hpp"

#include <fstream>

#include <json.hpp>

#include "langsurf/error.hpp"

namespace langsurf {

void save_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cameras) {
    std::vector<double> m(16);
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) m[static_cast<std::size_t>(r * 4 + k)] = c.world_to_camera(r, k);
    arr.push_back({{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
                   {"cx", c.cx}, {"cy", c.cy}, {"world_to_camera", m}});
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << arr.dump(2) << "\n";
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Camera> cams;
  try {
    const auto arr = nlohmann::json::parse(in);
    if (!arr.is_array()) throw FormatError(path.string() + ": expected a JSON array of cameras");
    for (const auto& j : arr) {
      Camera c;
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      c.fx = j.at("fx").get<double>();
      c.fy = j.at("fy").get<double>();
      c.cx = j.at("cx").get<double>();
      c.cy = j.at("cy").get<double>();
      const auto m = j.at("world_to_camera").get<std::vector<double>>();
      if (m.size() != 16) throw FormatError(path.string() + ": world_to_camera needs 16 values");
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) c.world_to_camera(r, k) = m[static_cast<std::size_t>(r * 4 + k)];
      c.validate();
      cams.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return cams;
}

}  // namespace langsurf
