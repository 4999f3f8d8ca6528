#include "fbcgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "fbcgan/error.hpp"
#include "fbcgan/image_io.hpp"
#include "fbcgan/log.hpp"

namespace fbc {

namespace fs = std::filesystem;

void validate_sample(const Sample& s) {
  if (!s.m.is_binary()) throw ValidationError("sample " + s.stem + ": mask is not binary");
  const Tensor& fg = s.fg_obj.tensor();
  const Tensor& m = s.m.tensor();
  if (fg.dim(2) != m.dim(2) || fg.dim(3) != m.dim(3) || s.x.tensor().shape() != fg.shape())
    throw ValidationError("sample " + s.stem + ": size mismatch");
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < fg.dim(2); ++y)
      for (int x = 0; x < fg.dim(3); ++x)
        if (m.at(0, 0, y, x) == 0.0 && fg.at(0, c, y, x) != 0.0)
          throw ValidationError("sample " + s.stem + ": foreground non-zero outside mask");
}

namespace {

std::vector<std::string> list_stems(const fs::path& root) {
  std::vector<std::string> stems;
  const fs::path manifest = root / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
      in >> j;
      for (const auto& e : j.at("samples")) stems.push_back(e.at("stem").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed manifest " + manifest.string() + ": " + e.what());
    }
    return stems;
  }
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) throw IoError("missing folder " + images.string());
  for (const auto& entry : fs::directory_iterator(images))
    if (entry.is_regular_file() && entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

Sample load_one(const fs::path& root, const std::string& stem, int resolution) {
  const std::string file = stem + ".png";
  Tensor x = io::resize_smooth(io::raster_to_image(io::read_png(root / "images" / file, 3)), resolution, resolution);
  Tensor fg =
      io::resize_smooth(io::raster_to_image(io::read_png(root / "foregrounds" / file, 3)), resolution, resolution);
  Tensor m = io::resize_nearest(io::raster_to_map(io::read_png(root / "masks" / file, 1)), resolution, resolution);
  for (auto& v : m.values()) v = v > 0.5 ? 1.0 : 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < resolution; ++y)
      for (int xx = 0; xx < resolution; ++xx)
        if (m.at(0, 0, y, xx) == 0.0) fg.at(0, c, y, xx) = 0.0;
  Sample s{ImageTensor(std::move(x)), ImageTensor(std::move(fg)), SpatialMap(std::move(m)), stem};
  validate_sample(s);
  return s;
}

}  // namespace

std::vector<Sample> load_samples(const fs::path& root, int resolution, int* warnings) {
  if (resolution < 4) throw InvalidArgument("resolution must be at least 4");
  if (!fs::is_directory(root)) throw IoError("dataset folder not found: " + root.string());
  std::vector<Sample> out;
  int skipped = 0;
  for (const auto& stem : list_stems(root)) {
    const std::string file = stem + ".png";
    std::vector<std::string> missing;
    for (const char* sub : {"images", "foregrounds", "masks"})
      if (!fs::exists(root / sub / file)) missing.push_back(sub);
    if (!missing.empty()) {
      std::string what;
      for (const auto& m : missing) what += (what.empty() ? "" : ", ") + m;
      log::warn("skipping sample '" + stem + "' in " + root.string() + ": missing " + what);
      ++skipped;
      continue;
    }
    out.push_back(load_one(root, stem, resolution));
  }
  if (warnings) *warnings += skipped;
  if (out.empty()) throw IoError("no usable samples in " + root.string());
  return out;
}

DatasetPair load_dataset(const fs::path& fg_dir, const fs::path& bg_dir, int resolution, int* warnings) {
  DatasetPair ds;
  ds.foreground_set = load_samples(fg_dir, resolution, warnings);
  if (fs::equivalent(fg_dir, bg_dir))
    ds.background_set = ds.foreground_set;
  else
    ds.background_set = load_samples(bg_dir, resolution, warnings);
  return ds;
}

void save_samples(const std::vector<Sample>& samples, const fs::path& root) {
  nlohmann::json manifest;
  manifest["samples"] = nlohmann::json::array();
  for (const auto& s : samples) {
    const std::string file = s.stem + ".png";
    io::write_png(root / "images" / file, io::image_to_raster(s.x.tensor()));
    io::write_png(root / "foregrounds" / file, io::image_to_raster(s.fg_obj.tensor()));
    io::write_png(root / "masks" / file, io::map_to_raster(s.m.tensor()));
    manifest["samples"].push_back({{"stem", s.stem}, {"split", "train"}});
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << manifest.dump(2) << '\n';
}

int sample_mismatched_index(int size, int idx, Rng& rng) {
  if (size < 2) throw InvalidArgument("mismatched sampling needs at least 2 samples");
  if (idx < 0 || idx >= size) throw InvalidArgument("sample index out of range");
  const int r = rng.uniform_int(size - 1);
  return r >= idx ? r + 1 : r;
}

SpatialMap sample_mismatched_mask(const DatasetPair& ds, int idx, Rng& rng) {
  const int j = sample_mismatched_index(static_cast<int>(ds.foreground_set.size()), idx, rng);
  return ds.foreground_set[j].m;
}

namespace {

double quantize(double v) { return std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)) / 127.5 - 1.0; }

struct Palette {
  double base[3];
  double accent[3];
};

Palette random_palette(Rng& rng) {
  Palette p;
  for (int c = 0; c < 3; ++c) {
    p.base[c] = rng.uniform() * 1.6 - 0.8;
    p.accent[c] = rng.uniform() * 1.6 - 0.8;
  }
  return p;
}

// Stripes at a random angle with a vertical colour gradient.
Tensor background_texture(int res, Rng& rng) {
  const Palette p = random_palette(rng);
  const double angle = rng.uniform() * std::numbers::pi;
  const double freq = 0.2 + rng.uniform() * 0.6;
  const double phase = rng.uniform() * 2 * std::numbers::pi;
  Tensor t({1, 3, res, res});
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double s = 0.5 + 0.5 * std::sin(freq * (x * std::cos(angle) + y * std::sin(angle)) + phase);
      const double g = static_cast<double>(y) / (res - 1);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - g) * p.base[c] + g * p.accent[c];
        t.at(0, c, y, x) = 0.7 * v + 0.25 * (2 * s - 1);
      }
    }
  return t;
}

// Checker or ring pattern in saturated colours.
Tensor object_texture(int res, Rng& rng) {
  Palette p = random_palette(rng);
  for (int c = 0; c < 3; ++c) {
    p.base[c] = p.base[c] < 0 ? -0.9 + 0.2 * rng.uniform() : 0.7 + 0.25 * rng.uniform();
  }
  const bool rings = rng.uniform() < 0.5;
  const int cell = 2 + rng.uniform_int(3);
  const double cx = res * (0.3 + 0.4 * rng.uniform()), cy = res * (0.3 + 0.4 * rng.uniform());
  Tensor t({1, 3, res, res});
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      bool on;
      if (rings)
        on = static_cast<int>(std::hypot(x - cx, y - cy) / cell) % 2 == 0;
      else
        on = ((x / cell) + (y / cell)) % 2 == 0;
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = on ? p.base[c] : p.accent[c];
    }
  return t;
}

Tensor ellipse_mask(int res, Rng& rng) {
  const double cx = res * (0.3 + 0.4 * rng.uniform()), cy = res * (0.3 + 0.4 * rng.uniform());
  const double rx = res * (0.12 + 0.25 * rng.uniform()), ry = res * (0.12 + 0.25 * rng.uniform());
  const double th = rng.uniform() * std::numbers::pi;
  Tensor m({1, 1, res, res});
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = dx * std::cos(th) + dy * std::sin(th), v = -dx * std::sin(th) + dy * std::cos(th);
      m.at(0, 0, y, x) = (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0 ? 1.0 : 0.0;
    }
  return m;
}

// Star-shaped polygon: sorted random angles, random radii.
Tensor polygon_mask(int res, Rng& rng) {
  const int k = 3 + rng.uniform_int(5);
  const double cx = res * (0.3 + 0.4 * rng.uniform()), cy = res * (0.3 + 0.4 * rng.uniform());
  std::vector<double> ang(k);
  for (auto& a : ang) a = rng.uniform() * 2 * std::numbers::pi;
  std::sort(ang.begin(), ang.end());
  std::vector<double> px(k), py(k);
  for (int i = 0; i < k; ++i) {
    const double r = res * (0.15 + 0.25 * rng.uniform());
    px[i] = cx + r * std::cos(ang[i]);
    py[i] = cy + r * std::sin(ang[i]);
  }
  Tensor m({1, 1, res, res});
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const double qx = x + 0.5, qy = y + 0.5;
      bool inside = false;
      for (int i = 0, j = k - 1; i < k; j = i++) {
        if ((py[i] > qy) != (py[j] > qy) && qx < (px[j] - px[i]) * (qy - py[i]) / (py[j] - py[i]) + px[i])
          inside = !inside;
      }
      m.at(0, 0, y, x) = inside ? 1.0 : 0.0;
    }
  return m;
}

}  // namespace

DatasetPair make_synthetic_dataset(int n, int resolution, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("synthetic dataset needs n >= 2");
  if (resolution < 8) throw InvalidArgument("synthetic dataset needs resolution >= 8");
  Rng rng(seed);
  const double area = static_cast<double>(resolution) * resolution;
  std::vector<Sample> samples;
  for (int i = 0; i < n; ++i) {
    Tensor m;
    double cov = 0;
    do {
      m = rng.uniform() < 0.5 ? ellipse_mask(resolution, rng) : polygon_mask(resolution, rng);
      cov = 0;
      for (double v : m.values()) cov += v;
      cov /= area;
    } while (cov < 0.05 || cov > 0.60);
    const Tensor bg = background_texture(resolution, rng);
    const Tensor obj = object_texture(resolution, rng);
    Tensor x({1, 3, resolution, resolution}), fg({1, 3, resolution, resolution});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < resolution; ++y)
        for (int xx = 0; xx < resolution; ++xx) {
          const bool in = m.at(0, 0, y, xx) == 1.0;
          const double v = quantize(in ? obj.at(0, c, y, xx) : bg.at(0, c, y, xx));
          x.at(0, c, y, xx) = v;
          fg.at(0, c, y, xx) = in ? v : 0.0;
        }
    char stem[16];
    std::snprintf(stem, sizeof stem, "%05d", i);
    samples.push_back({ImageTensor(std::move(x)), ImageTensor(std::move(fg)), SpatialMap(std::move(m)), stem});
  }
  return {samples, samples};
}

}  // namespace fbc
