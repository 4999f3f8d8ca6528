#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fbcgan/tensor.hpp"

namespace fbc::io {

/// 8-bit interleaved pixels.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
};

/// Reads any PNG, converted to 1 (gray) or 3 (RGB) channels.
Raster read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Raster& raster);

/// [1,C,H,W] tensor; images map 0..255 to [-1,1], masks to [0,1].
Tensor raster_to_image(const Raster& r);
Tensor raster_to_map(const Raster& r);
/// Rounds to the nearest 8-bit level; values are clamped first.
Raster image_to_raster(const Tensor& image, int index = 0);
Raster map_to_raster(const Tensor& map, int index = 0);

/// Box filter for integer downscale factors, bilinear otherwise.
Tensor resize_smooth(const Tensor& t, int height, int width);
Tensor resize_nearest(const Tensor& t, int height, int width);

/// Tiles [1,C,H,W] images (C = 1 or 3, values in [-1,1] or [0,1] for maps) in a
/// rows x cols grid separated by a 2-pixel gutter.
void write_grid(const std::filesystem::path& path, const std::vector<std::vector<Tensor>>& rows);

}  // namespace fbc::io
