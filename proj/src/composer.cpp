#include "fbcgan/composer.hpp"

#include <cmath>
#include <numbers>

#include "fbcgan/background_modifier.hpp"
#include "fbcgan/error.hpp"
#include "fbcgan/log.hpp"
#include "fbcgan/ops.hpp"

namespace fbc {

namespace {

bool is_integer(double v) { return std::floor(v) == v; }

int quarter_turns(double deg) {
  const double q = deg / 90.0;
  if (!is_integer(q)) return -1;
  return ((static_cast<int>(q) % 4) + 4) % 4;
}

// Source pixel for an output pixel under the inverse of a lossless map.
// Coordinates are doubled and centred so that they stay integral.
bool lossless_source(const ForegroundTransform& t, int w, int h, int ox, int oy, int& sx, int& sy) {
  long u = 2L * ox - (w - 1) - 2L * static_cast<long>(t.dx);
  long v = 2L * oy - (h - 1) - 2L * static_cast<long>(t.dy);
  // Undo the counter-clockwise rotation: rotate clockwise as displayed.
  for (int k = quarter_turns(t.rotation_deg); k > 0; --k) {
    const long nu = -v, nv = u;
    u = nu;
    v = nv;
  }
  if (t.flip_horizontal) u = -u;
  const long x2 = u + (w - 1), y2 = v + (h - 1);
  if ((x2 & 1) || (y2 & 1)) return false;  // odd canvas rotated off-grid
  sx = static_cast<int>(x2 / 2);
  sy = static_cast<int>(y2 / 2);
  return sx >= 0 && sx < w && sy >= 0 && sy < h;
}

void inverse_point(const ForegroundTransform& t, int w, int h, double ox, double oy, double& sx, double& sy) {
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double px = ox - cx - t.dx, py = oy - cy - t.dy;
  const double th = t.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  // Forward (y down, counter-clockwise on screen): x' = x c + y s, y' = -x s + y c.
  double rx = px * c - py * s;
  double ry = px * s + py * c;
  rx /= t.scale;
  ry /= t.scale;
  if (t.flip_horizontal) rx = -rx;
  sx = rx + cx;
  sy = ry + cy;
}

}  // namespace

bool ForegroundTransform::is_lossless() const {
  return scale == 1.0 && quarter_turns(rotation_deg) >= 0 && is_integer(dx) && is_integer(dy);
}

void ForegroundTransform::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("transform scale must be positive");
  if (!std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(rotation_deg))
    throw InvalidArgument("transform parameters must be finite");
}

Tensor compose(const Tensor& fg, const Tensor& mask, const Tensor& bg_compat) {
  if (fg.shape() != bg_compat.shape() || fg.rank() != 4 || mask.rank() != 4 || mask.dim(1) != 1 ||
      mask.dim(0) != fg.dim(0) || mask.dim(2) != fg.dim(2) || mask.dim(3) != fg.dim(3))
    throw InvalidArgument("compose: inputs are not co-registered");
  for (double v : mask.values())
    if (v != 0.0 && v != 1.0) throw InvalidArgument("compose: mask must be binary; binarize it first");
  const int n = fg.dim(0), c = fg.dim(1);
  const std::size_t plane = static_cast<std::size_t>(fg.dim(2)) * fg.dim(3);
  Tensor out(fg.shape());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (static_cast<std::size_t>(b) * c + ch) * plane + i;
        out[k] = mask[b * plane + i] == 1.0 ? fg[k] : bg_compat[k];
      }
  return out;
}

ImageTensor compose(const ImageTensor& fg, const SpatialMap& mask, const ImageTensor& bg_compat) {
  return ImageTensor(compose(fg.tensor(), mask.tensor(), bg_compat.tensor()));
}

std::pair<ImageTensor, SpatialMap> transform_foreground(const ImageTensor& fg, const SpatialMap& shape,
                                                        const ForegroundTransform& t) {
  t.validate();
  const int h = fg.height(), w = fg.width();
  if (shape.height() != h || shape.width() != w) throw InvalidArgument("transform_foreground: fg and shape differ in size");
  if (t.is_identity()) return {fg, shape};

  Tensor img({1, 3, h, w});
  Tensor msk({1, 1, h, w});
  const bool exact = t.is_lossless();
  for (int oy = 0; oy < h; ++oy)
    for (int ox = 0; ox < w; ++ox) {
      if (exact) {
        int sx = 0, sy = 0;
        if (!lossless_source(t, w, h, ox, oy, sx, sy)) continue;
        for (int c = 0; c < 3; ++c) img.at(0, c, oy, ox) = fg.at(c, sy, sx);
        msk.at(0, 0, oy, ox) = shape.at(sy, sx);
        continue;
      }
      double sx = 0, sy = 0;
      inverse_point(t, w, h, ox, oy, sx, sy);
      const int nx = static_cast<int>(std::floor(sx + 0.5)), ny = static_cast<int>(std::floor(sy + 0.5));
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      msk.at(0, 0, oy, ox) = shape.at(ny, nx);
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i) {
            const int xx = std::clamp(x0 + i, 0, w - 1), yy = std::clamp(y0 + j, 0, h - 1);
            acc += (i ? fx : 1 - fx) * (j ? fy : 1 - fy) * fg.at(c, yy, xx);
          }
        img.at(0, c, oy, ox) = acc;
      }
    }
  SpatialMap out_shape(std::move(msk));
  if (out_shape.coverage() == 0.0 && shape.coverage() > 0.0)
    log::warn("transform_foreground: the transformed object left the canvas entirely");
  return {ImageTensor(std::move(img)), std::move(out_shape)};
}

Composition synthesize(const Model& model, std::span<const LatentCode> z_f, std::span<const LatentCode> z_b,
                       std::span<const LatentCode> z_s, const ForegroundTransform& t, const RunConfig& cfg) {
  if (z_f.size() != z_b.size() || z_f.size() != z_s.size() || z_f.empty())
    throw InvalidArgument("synthesize: latent batches must be non-empty and equally sized");
  t.validate();
  NoGradGuard guard;
  const auto& g = model.generators;
  Var m_i = shape_forward(g, Var(stack_latents(z_s)));
  auto bg = background_forward(g, Var(stack_latents(z_b)));
  Var fg = foreground_forward(g, Var(stack_latents(z_f)), m_i, bg.features, StyleAlignmentConfig::from(cfg));

  Composition out;
  if (t.is_identity()) {
    out.shape = m_i.value();
    out.foreground = fg.value();
  } else {
    std::vector<ImageTensor> fgs;
    std::vector<SpatialMap> shapes;
    const auto fg_list = split_images(fg.value());
    const auto shape_list = split_maps(m_i.value());
    for (std::size_t i = 0; i < fg_list.size(); ++i) {
      auto [tf, ts] = transform_foreground(fg_list[i], shape_list[i], t);
      fgs.push_back(std::move(tf));
      shapes.push_back(std::move(ts));
    }
    out.shape = stack_maps(shapes);
    out.foreground = stack_images(fgs);
  }
  auto mod = modifier_forward(model.modifier, bg.image, Var(out.shape), cfg.geometry_alignment_enabled);
  out.mask = binarize(out.shape, cfg.mask_threshold);
  out.background = bg.image.value();
  out.preliminary = mod.y.value();
  out.generated_mask = mod.m_g.value();
  out.compatible_background =
      extract_compatible_background(mod.y, Var(binarize(mod.m_g.value(), cfg.mask_threshold))).value();
  out.composite = compose(out.foreground, out.mask, out.compatible_background);
  return out;
}

ImageTensor compose_with_transform(const LatentCode& z_f, const LatentCode& z_b, const LatentCode& z_s,
                                   const ForegroundTransform& t, const Model& model, const RunConfig& cfg) {
  const LatentCode f[] = {z_f}, b[] = {z_b}, s[] = {z_s};
  return ImageTensor(synthesize(model, f, b, s, t, cfg).composite);
}

}  // namespace fbc
