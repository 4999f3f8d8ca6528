#include "fbcgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fbcgan/error.hpp"

namespace fbc::io {

Raster read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw InvalidArgument("read_png: channels must be 1 or 3");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.width = static_cast<int>(image.width);
  r.height = static_cast<int>(image.height);
  r.channels = channels;
  r.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& r) {
  if (r.pixels.size() != static_cast<std::size_t>(r.width) * r.height * r.channels)
    throw InvalidArgument("write_png: pixel buffer size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, r.pixels.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

namespace {

Tensor raster_to_tensor(const Raster& r, bool signed_range) {
  Tensor t({1, r.channels, r.height, r.width});
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c) {
        const double p = r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c];
        t.at(0, c, y, x) = signed_range ? p / 127.5 - 1.0 : p / 255.0;
      }
  return t;
}

Raster tensor_to_raster(const Tensor& t, int index, bool signed_range) {
  if (t.rank() != 4 || (t.dim(1) != 1 && t.dim(1) != 3)) throw InvalidArgument("expected [N,1|3,H,W] tensor");
  Raster r;
  r.channels = t.dim(1);
  r.height = t.dim(2);
  r.width = t.dim(3);
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c) {
        const double v = t.at(index, c, y, x);
        const double p = signed_range ? (v + 1.0) * 127.5 : v * 255.0;
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 255.0)));
      }
  return r;
}

}  // namespace

Tensor raster_to_image(const Raster& r) { return raster_to_tensor(r, true); }
Tensor raster_to_map(const Raster& r) { return raster_to_tensor(r, false); }
Raster image_to_raster(const Tensor& image, int index) { return tensor_to_raster(image, index, true); }
Raster map_to_raster(const Tensor& map, int index) { return tensor_to_raster(map, index, false); }

Tensor resize_smooth(const Tensor& t, int height, int width) {
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (h == height && w == width) return t;
  Tensor out({n, c, height, width});
  if (h % height == 0 && w % width == 0 && h / height == w / width) {
    const int k = h / height;
    const double inv = 1.0 / (k * k);
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) out.at(b, ch, y / k, x / k) += t.at(b, ch, y, x) * inv;
    return out;
  }
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
          const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
          const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
          const double ay = fy - y0, ax = fx - x0;
          out.at(b, ch, y, x) = (1 - ay) * ((1 - ax) * t.at(b, ch, y0, x0) + ax * t.at(b, ch, y0, x1)) +
                                ay * ((1 - ax) * t.at(b, ch, y1, x0) + ax * t.at(b, ch, y1, x1));
        }
  return out;
}

Tensor resize_nearest(const Tensor& t, int height, int width) {
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (h == height && w == width) return t;
  Tensor out({n, c, height, width});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / height));
          const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / width));
          out.at(b, ch, y, x) = t.at(b, ch, sy, sx);
        }
  return out;
}

void write_grid(const std::filesystem::path& path, const std::vector<std::vector<Tensor>>& rows) {
  constexpr int kGap = 2;
  int cell_h = 0, cell_w = 0;
  std::size_t cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& t : row) {
      cell_h = std::max(cell_h, t.dim(2));
      cell_w = std::max(cell_w, t.dim(3));
    }
  }
  if (rows.empty() || cols == 0) throw InvalidArgument("write_grid: nothing to draw");
  Raster r;
  r.channels = 3;
  r.width = static_cast<int>(cols) * (cell_w + kGap) + kGap;
  r.height = static_cast<int>(rows.size()) * (cell_h + kGap) + kGap;
  r.pixels.assign(static_cast<std::size_t>(r.width) * r.height * 3, 255);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const Tensor& t = rows[i][j];
      const bool is_map = t.dim(1) == 1;
      const Raster cell = is_map ? map_to_raster(t) : image_to_raster(t);
      const int oy = kGap + static_cast<int>(i) * (cell_h + kGap);
      const int ox = kGap + static_cast<int>(j) * (cell_w + kGap);
      for (int y = 0; y < cell.height; ++y)
        for (int x = 0; x < cell.width; ++x)
          for (int c = 0; c < 3; ++c)
            r.pixels[(static_cast<std::size_t>(oy + y) * r.width + ox + x) * 3 + c] =
                cell.pixels[(static_cast<std::size_t>(y) * cell.width + x) * cell.channels + (is_map ? 0 : c)];
    }
  write_png(path, r);
}

}  // namespace fbc::io
