#include "langsurf/ply.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "langsurf/error.hpp"

namespace langsurf {
namespace {

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

Scalar parse_scalar(const std::string& t, const std::string& where) {
  if (t == "char" || t == "int8") return Scalar::I8;
  if (t == "uchar" || t == "uint8") return Scalar::U8;
  if (t == "short" || t == "int16") return Scalar::I16;
  if (t == "ushort" || t == "uint16") return Scalar::U16;
  if (t == "int" || t == "int32") return Scalar::I32;
  if (t == "uint" || t == "uint32") return Scalar::U32;
  if (t == "float" || t == "float32") return Scalar::F32;
  if (t == "double" || t == "float64") return Scalar::F64;
  throw FormatError(where + ": unknown PLY property type '" + t + "'");
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8:
    case Scalar::U8:
      return 1;
    case Scalar::I16:
    case Scalar::U16:
      return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32:
      return 4;
    case Scalar::F64:
      return 8;
  }
  return 0;
}

template <typename T>
double load_as(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

double decode(Scalar s, const char* p) {
  switch (s) {
    case Scalar::I8: return load_as<std::int8_t>(p);
    case Scalar::U8: return load_as<std::uint8_t>(p);
    case Scalar::I16: return load_as<std::int16_t>(p);
    case Scalar::U16: return load_as<std::uint16_t>(p);
    case Scalar::I32: return load_as<std::int32_t>(p);
    case Scalar::U32: return load_as<std::uint32_t>(p);
    case Scalar::F32: return load_as<float>(p);
    case Scalar::F64: return load_as<double>(p);
  }
  return 0.0;
}

struct ElementDecl {
  std::string name;
  std::size_t count = 0;
  std::vector<std::pair<std::string, Scalar>> props;
  bool has_list = false;
};

}  // namespace

const std::vector<double>& PlyTable::column(const std::string& name) const {
  auto it = columns.find(name);
  if (it == columns.end()) throw FormatError("PLY: missing property '" + name + "'");
  return it->second;
}

PlyTable read_ply_vertices(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + where);
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  // Header is ASCII lines up to "end_header\n".
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw FormatError(where + ": unterminated PLY header");
    std::string line(bytes.data() + start, pos - start);
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw FormatError(where + ": missing 'ply' magic");
  std::string format;
  std::vector<ElementDecl> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      ElementDecl e;
      long long count = -1;
      ls >> e.name >> count;
      if (count < 0) throw FormatError(where + ": malformed element line '" + line + "'");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) throw FormatError(where + ": property before element");
      std::string type, name;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
        continue;
      }
      ls >> name;
      if (name.empty()) throw FormatError(where + ": malformed property line '" + line + "'");
      elements.back().props.emplace_back(name, parse_scalar(type, where));
    } else {
      throw FormatError(where + ": unexpected header keyword '" + kw + "'");
    }
  }
  const bool binary = format == "binary_little_endian";
  if (!binary && format != "ascii") {
    throw FormatError(where + ": unsupported PLY format '" + format + "'");
  }

  PlyTable table;
  std::istringstream ascii;
  if (!binary) ascii.str(std::string(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));

  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    if (e.has_list) {
      if (is_vertex) throw FormatError(where + ": list properties on vertex are not supported");
      if (binary) break;  // cannot skip variable-size records; vertex must come first
    }
    std::size_t stride = 0;
    for (const auto& [n, s] : e.props) stride += scalar_size(s);

    if (!is_vertex) {
      if (binary) {
        pos += stride * e.count;
      } else {
        std::string skip;
        for (std::size_t r = 0; r < e.count; ++r) std::getline(ascii, skip);
      }
      continue;
    }

    table.count = e.count;
    for (const auto& [n, s] : e.props) {
      table.names.push_back(n);
      table.columns[n].resize(e.count);
    }
    if (binary) {
      if (bytes.size() < pos + stride * e.count) {
        throw FormatError(where + ": vertex payload truncated (expected " +
                          std::to_string(stride * e.count) + " bytes)");
      }
      for (std::size_t r = 0; r < e.count; ++r) {
        const char* rec = bytes.data() + pos + r * stride;
        std::size_t off = 0;
        for (const auto& [n, s] : e.props) {
          table.columns[n][r] = decode(s, rec + off);
          off += scalar_size(s);
        }
      }
    } else {
      for (std::size_t r = 0; r < e.count; ++r) {
        for (const auto& [n, s] : e.props) {
          double v;
          if (!(ascii >> v)) {
            throw FormatError(where + ": vertex " + std::to_string(r) + " property '" + n +
                              "' is missing or malformed");
          }
          table.columns[n][r] = v;
        }
      }
    }
    return table;
  }
  throw FormatError(where + ": no 'vertex' element");
}

void write_ply_vertices(const std::filesystem::path& path, const PlyTable& table) {
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : table.names) {
    const auto& c = table.column(n);
    if (c.size() != table.count) {
      throw ShapeError("PLY column '" + n + "' has " + std::to_string(c.size()) + " values, expected " +
                       std::to_string(table.count));
    }
    cols.push_back(&c);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << table.count << "\n";
  for (const auto& n : table.names) out << "property float " << n << "\n";
  out << "end_header\n";
  std::vector<float> row(cols.size());
  for (std::size_t r = 0; r < table.count; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) row[c] = static_cast<float>((*cols[c])[r]);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace langsurf
