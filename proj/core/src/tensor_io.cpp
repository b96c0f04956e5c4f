#include "langsurf/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace langsurf {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor and PLY I/O assume a little-endian host");

constexpr std::array<char, 4> kMagic = {'L', 'S', 'T', 'F'};
constexpr std::uint8_t kVersion = 1;

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::Float32:
    case DType::Int32:
      return 4;
    case DType::UInt8:
      return 1;
  }
  return 0;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  if (tensor.dims.size() > 255) throw InvalidParameter("tensor rank exceeds 255");
  const std::size_t n = tensor.element_count();
  const void* payload = nullptr;
  std::size_t have = 0;
  switch (tensor.dtype) {
    case DType::Float32:
      payload = tensor.f32.data();
      have = tensor.f32.size();
      break;
    case DType::Int32:
      payload = tensor.i32.data();
      have = tensor.i32.size();
      break;
    case DType::UInt8:
      payload = tensor.u8.data();
      have = tensor.u8.size();
      break;
  }
  if (have != n) throw ShapeError("tensor payload length does not match dims");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kMagic.data(), 4);
  const std::array<std::uint8_t, 4> head = {kVersion, static_cast<std::uint8_t>(tensor.dtype),
                                            static_cast<std::uint8_t>(tensor.dims.size()), 0};
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(reinterpret_cast<const char*>(tensor.dims.data()),
            static_cast<std::streamsize>(tensor.dims.size() * 4));
  out.write(static_cast<const char*>(payload),
            static_cast<std::streamsize>(n * dtype_size(tensor.dtype)));
  if (!out) throw FormatError("short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string where = path.string();
  if (bytes.size() < 8 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError(where + ": missing LSTF magic");
  }
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  const auto dtype = static_cast<std::uint8_t>(bytes[5]);
  const auto ndim = static_cast<std::uint8_t>(bytes[6]);
  if (version != kVersion) {
    throw FormatError(where + ": unsupported LSTF version " + std::to_string(version));
  }
  if (dtype > 2) throw FormatError(where + ": unknown dtype code " + std::to_string(dtype));

  Tensor t;
  t.dtype = static_cast<DType>(dtype);
  const std::size_t dims_end = 8 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < dims_end) throw FormatError(where + ": truncated dims");
  t.dims.resize(ndim);
  std::memcpy(t.dims.data(), bytes.data() + 8, 4 * static_cast<std::size_t>(ndim));

  const std::size_t n = t.element_count();
  const std::size_t payload = n * dtype_size(t.dtype);
  if (bytes.size() != dims_end + payload) {
    throw FormatError(where + ": payload is " + std::to_string(bytes.size() - dims_end) +
                      " bytes, dims require " + std::to_string(payload));
  }
  const char* src = bytes.data() + dims_end;
  switch (t.dtype) {
    case DType::Float32:
      t.f32.resize(n);
      std::memcpy(t.f32.data(), src, payload);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(t.f32[i])) {
          throw FormatError(where + ": non-finite value at element " + std::to_string(i));
        }
      }
      break;
    case DType::Int32:
      t.i32.resize(n);
      std::memcpy(t.i32.data(), src, payload);
      break;
    case DType::UInt8:
      t.u8.resize(n);
      std::memcpy(t.u8.data(), src, payload);
      break;
  }
  return t;
}

Tensor make_f32(std::vector<std::uint32_t> dims, std::span<const double> values) {
  Tensor t;
  t.dtype = DType::Float32;
  t.dims = std::move(dims);
  t.f32.assign(values.begin(), values.end());
  if (t.f32.size() != t.element_count()) throw ShapeError("make_f32: dims/value count mismatch");
  return t;
}

Tensor make_i32(std::vector<std::uint32_t> dims, std::span<const std::int32_t> values) {
  Tensor t;
  t.dtype = DType::Int32;
  t.dims = std::move(dims);
  t.i32.assign(values.begin(), values.end());
  if (t.i32.size() != t.element_count()) throw ShapeError("make_i32: dims/value count mismatch");
  return t;
}

void write_image_tensor(const std::filesystem::path& path, const FloatImage& image) {
  write_tensor(path, make_f32({static_cast<std::uint32_t>(image.height),
                               static_cast<std::uint32_t>(image.width),
                               static_cast<std::uint32_t>(image.channels)},
                              image.data));
}

FloatImage read_image_tensor(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dtype != DType::Float32) throw FormatError(path.string() + ": expected float32 tensor");
  if (t.dims.size() != 2 && t.dims.size() != 3) {
    throw FormatError(path.string() + ": expected (H, W) or (H, W, C) tensor, got rank " +
                      std::to_string(t.dims.size()));
  }
  FloatImage img;
  img.height = static_cast<int>(t.dims[0]);
  img.width = static_cast<int>(t.dims[1]);
  img.channels = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
  img.data.assign(t.f32.begin(), t.f32.end());
  return img;
}

void write_label_tensor(const std::filesystem::path& path, const LabelImage& labels) {
  write_tensor(path, make_i32({static_cast<std::uint32_t>(labels.height),
                               static_cast<std::uint32_t>(labels.width)},
                              labels.data));
}

LabelImage read_label_tensor(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dtype != DType::Int32) throw FormatError(path.string() + ": expected int32 tensor");
  if (t.dims.size() != 2) {
    throw FormatError(path.string() + ": expected (H, W) label tensor, got rank " +
                      std::to_string(t.dims.size()));
  }
  LabelImage img(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), 1);
  img.data = t.i32;
  return img;
}

void write_ppm(const std::filesystem::path& path, const FloatImage& rgb) {
  if (rgb.channels != 3) throw ShapeError("write_ppm: expected 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P6\n" << rgb.width << ' ' << rgb.height << "\n255\n";
  std::vector<unsigned char> bytes(rgb.data.size());
  for (std::size_t i = 0; i < rgb.data.size(); ++i) {
    const double v = std::clamp(rgb.data[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FloatImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw FormatError(path.string() + ": not an 8-bit binary PPM");
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError(path.string() + ": truncated pixel data");
  FloatImage img(h, w, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image<std::uint8_t>& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<unsigned char> bytes(mask.pixel_count());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i * mask.channels] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace langsurf
