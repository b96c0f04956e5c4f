#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace langsurf {

/// Columns of one PLY element, converted to double on read. Property order
/// is preserved in `names`.
struct PlyTable {
  std::size_t count = 0;
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> columns;

  bool has(const std::string& name) const { return columns.count(name) != 0; }
  const std::vector<double>& column(const std::string& name) const;
};

/// Reads element `vertex` of a binary little-endian or ASCII PLY file.
PlyTable read_ply_vertices(const std::filesystem::path& path);

/// Writes element `vertex` as binary little-endian with float32 properties
/// in the order given by `names`.
void write_ply_vertices(const std::filesystem::path& path, const PlyTable& table);

}  // namespace langsurf
