#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "langsurf/error.hpp"

namespace langsurf {

/// Dense row-major H x W x C image. Pixel (x, y) channel c lives at
/// data[(y * width + x) * channels + c].
template <typename T>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  T& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::span<T> pixel(std::size_t index) {
    return {data.data() + index * channels, static_cast<std::size_t>(channels)};
  }
  std::span<const T> pixel(std::size_t index) const {
    return {data.data() + index * channels, static_cast<std::size_t>(channels)};
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

using FloatImage = Image<double>;
using LabelImage = Image<std::int32_t>;

template <typename A, typename B>
void require_same_hw(const Image<A>& a, const Image<B>& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": image size mismatch (" + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

}  // namespace langsurf
