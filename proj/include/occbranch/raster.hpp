#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "occbranch/error.hpp"

namespace occbranch {

/// Interleaved (row-major, channel-last) raster.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  T& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  bool operator==(const Raster&) const = default;
};

/// 8-bit RGB (3 channels) or RGB-D (4 channels) image.
using RgbImage = Raster<std::uint8_t>;

/// Binary raster; every value is 0 or 1.
using MaskImage = Raster<std::uint8_t>;

inline MaskImage make_mask(int width, int height) { return MaskImage(width, height, 1, 0); }

inline std::size_t count_foreground(const MaskImage& mask) {
  std::size_t n = 0;
  for (auto v : mask.data) n += v != 0;
  return n;
}

/// True when every foreground pixel of `inner` is also foreground in `outer`.
inline bool is_subset(const MaskImage& inner, const MaskImage& outer) {
  if (inner.width != outer.width || inner.height != outer.height) {
    throw ShapeError("mask dimensions differ");
  }
  for (std::size_t i = 0; i < inner.data.size(); ++i) {
    if (inner.data[i] && !outer.data[i]) return false;
  }
  return true;
}

}  // namespace occbranch
