#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "langsurf/image.hpp"

namespace langsurf {

enum class DType : std::uint8_t { Float32 = 0, Int32 = 1, UInt8 = 2 };

/// In-memory view of an LSTF tensor file. Exactly one payload vector is
/// populated, matching dtype.
struct Tensor {
  DType dtype = DType::Float32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;
  std::vector<std::uint8_t> u8;

  std::size_t element_count() const;
};

// LSTF layout: "LSTF", u8 version (1), u8 dtype, u8 ndim, one zero pad byte,
// ndim little-endian u32 dims, row-major little-endian payload.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

Tensor make_f32(std::vector<std::uint32_t> dims, std::span<const double> values);
Tensor make_i32(std::vector<std::uint32_t> dims, std::span<const std::int32_t> values);

/// (H, W, C) float32 tensor <-> FloatImage. A 2-D tensor loads as C = 1.
void write_image_tensor(const std::filesystem::path& path, const FloatImage& image);
FloatImage read_image_tensor(const std::filesystem::path& path);
void write_label_tensor(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_label_tensor(const std::filesystem::path& path);

/// Binary P6, 8-bit, values clamped to [0, 1] and scaled linearly.
void write_ppm(const std::filesystem::path& path, const FloatImage& rgb);
FloatImage read_ppm(const std::filesystem::path& path);
/// Binary P5 of a boolean mask, 0 / 255.
void write_pgm(const std::filesystem::path& path, const Image<std::uint8_t>& mask);

}  // namespace langsurf
