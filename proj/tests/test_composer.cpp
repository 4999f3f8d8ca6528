#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fbcgan/background_modifier.hpp"
#include "fbcgan/composer.hpp"
#include "fbcgan/error.hpp"
#include "fbcgan/kernels.hpp"
#include "support.hpp"

using namespace fbc;
using fbc::testing::random_tensor;

namespace {

constexpr int kSize = 32;

ImageTensor random_image(Rng& rng) { return ImageTensor(random_tensor({1, 3, kSize, kSize}, rng)); }

SpatialMap disk(double cx, double cy, double r) {
  Tensor t({1, 1, kSize, kSize});
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x) t.at(0, 0, y, x) = std::hypot(x - cx, y - cy) <= r ? 1.0 : 0.0;
  return SpatialMap(t);
}

// An asymmetric blob so flips and rotations are all distinguishable.
SpatialMap blob() {
  Tensor t({1, 1, kSize, kSize});
  for (int y = 6; y < 20; ++y)
    for (int x = 9; x < 15; ++x) t.at(0, 0, y, x) = 1.0;
  for (int y = 6; y < 10; ++y)
    for (int x = 15; x < 24; ++x) t.at(0, 0, y, x) = 1.0;
  return SpatialMap(t);
}

std::pair<double, double> centroid(const SpatialMap& m) {
  double sx = 0, sy = 0, s = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      sx += x * m.at(y, x);
      sy += y * m.at(y, x);
      s += m.at(y, x);
    }
  return {sx / s, sy / s};
}

ForegroundTransform rot(double deg) {
  ForegroundTransform t;
  t.rotation_deg = deg;
  return t;
}

ForegroundTransform flip() {
  ForegroundTransform t;
  t.flip_horizontal = true;
  return t;
}

std::pair<ImageTensor, SpatialMap> xform(const std::pair<ImageTensor, SpatialMap>& p, const ForegroundTransform& t) {
  return transform_foreground(p.first, p.second, t);
}

RunConfig cfg32() {
  RunConfig cfg;
  cfg.validate();
  return cfg;
}

Model model(const RunConfig& cfg) {
  Rng rng(cfg.seed);
  return Model::create(cfg, rng);
}

}  // namespace

TEST_CASE("compose blends by a binary mask") {
  Rng rng(1);
  const auto fg = random_image(rng), bg = random_image(rng);
  CHECK(compose(fg, SpatialMap::filled(kSize, kSize, 1.0), bg) == fg);
  CHECK(compose(fg, SpatialMap::filled(kSize, kSize, 0.0), bg) == bg);

  Tensor half({1, 1, kSize, kSize});
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize / 2; ++x) half.at(0, 0, y, x) = 1.0;
  const auto out = compose(fg, SpatialMap(half), bg);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) CHECK(out.at(c, y, x) == (x < kSize / 2 ? fg.at(c, y, x) : bg.at(c, y, x)));

  CHECK_THROWS_AS(compose(fg, SpatialMap::filled(kSize, kSize, 0.5), bg), InvalidArgument);
  CHECK_THROWS_AS(compose(fg, SpatialMap::filled(8, 8, 1.0), bg), InvalidArgument);
}

TEST_CASE("every composite pixel comes from exactly one layer") {
  Rng rng(2);
  const auto fg = random_image(rng), bg = random_image(rng);
  const auto m = binarize_mask(SpatialMap(random_tensor({1, 1, kSize, kSize}, rng, 0, 1)));
  const auto out = compose(fg, m, bg);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) {
        const double v = out.at(c, y, x);
        CHECK((v == fg.at(c, y, x)) != (v == bg.at(c, y, x) && fg.at(c, y, x) != bg.at(c, y, x)));
      }
}

TEST_CASE("lossless transforms are exact involutions") {
  Rng rng(3);
  const std::pair<ImageTensor, SpatialMap> orig{random_image(rng), blob()};

  CHECK(xform(orig, ForegroundTransform{}) == orig);

  const auto f1 = xform(orig, flip());
  CHECK_FALSE(f1.second == orig.second);
  CHECK(xform(f1, flip()) == orig);

  auto r = orig;
  for (int k = 0; k < 4; ++k) {
    r = xform(r, rot(90));
    if (k < 3) CHECK_FALSE(r.second == orig.second);
  }
  CHECK(r == orig);
  CHECK(xform(xform(orig, rot(90)), rot(90)).second == xform(orig, rot(180)).second);
  CHECK(xform(orig, rot(-90)).second == xform(orig, rot(270)).second);
  CHECK(xform(orig, rot(450)).second == xform(orig, rot(90)).second);
}

TEST_CASE("the image and its shape receive the same map") {
  // Encode the mask into the image so any disagreement shows up.
  const auto m = blob();
  Tensor img({1, 3, kSize, kSize});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) img.at(0, c, y, x) = m.at(y, x);
  ForegroundTransform t;
  t.dx = 3;
  t.dy = -2;
  t.rotation_deg = 90;
  t.flip_horizontal = true;
  const auto [ti, tm] = transform_foreground(ImageTensor(img), m, t);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) CHECK(ti.at(c, y, x) == tm.at(y, x));
  CHECK(tm.coverage() == m.coverage());
}

TEST_CASE("shifts move the centroid and zero the vacated area") {
  const auto m = disk(15.5, 15.5, 6);
  Rng rng(4);
  const auto fg = random_image(rng);
  const auto [c0x, c0y] = centroid(m);
  ForegroundTransform t;
  t.dx = 8;
  const auto [img, moved] = transform_foreground(fg, m, t);
  const auto [c1x, c1y] = centroid(moved);
  CHECK(std::abs(c1x - c0x - 8) <= 0.5);
  CHECK(std::abs(c1y - c0y) <= 0.5);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < 8; ++x) CHECK(img.at(c, y, x) == 0.0);
  // Inside the canvas the content is an exact translate.
  for (int y = 0; y < kSize; ++y)
    for (int x = 8; x < kSize; ++x) CHECK(img.at(0, y, x) == fg.at(0, y, x - 8));

  t.dx = 1000;
  const auto gone = transform_foreground(fg, m, t);
  CHECK(gone.second.coverage() == 0.0);
  CHECK(gone.first.tensor().max() == 0.0);
  CHECK(gone.first.tensor().min() == 0.0);
}

TEST_CASE("resampled transforms keep the mask binary") {
  const auto m = blob();
  Rng rng(5);
  const auto fg = random_image(rng);
  ForegroundTransform t;
  t.rotation_deg = 33;
  t.scale = 1.3;
  t.dx = 0.5;
  const auto [img, out] = transform_foreground(fg, m, t);
  CHECK(out.is_binary());
  CHECK(out.coverage() > m.coverage());
  CHECK(img.tensor().min() >= -1.0);
  CHECK(img.tensor().max() <= 1.0);
  t.scale = 0.0;
  CHECK_THROWS_AS(transform_foreground(fg, m, t), InvalidArgument);
  t.scale = -1.0;
  CHECK_THROWS_AS(transform_foreground(fg, m, t), InvalidArgument);
}

TEST_CASE("pipeline: identity transform equals plain generation") {
  RunConfig cfg = cfg32();
  const Model mdl = model(cfg);
  Rng rng(6);
  std::vector<LatentCode> zf, zb, zs;
  for (int i = 0; i < 3; ++i) {
    zf.push_back(sample_latent(rng, cfg.d_z));
    zb.push_back(sample_latent(rng, cfg.d_z));
    zs.push_back(sample_latent(rng, cfg.d_z));
  }
  const auto batch = synthesize(mdl, zf, zb, zs, ForegroundTransform{}, cfg);
  for (int i = 0; i < 3; ++i)
    CHECK(compose_with_transform(zf[i], zb[i], zs[i], ForegroundTransform{}, mdl, cfg).tensor() == batch.composite.sample(i));
  CHECK(batch.mask.shape() == Shape{3, 1, kSize, kSize});
  CHECK(batch.composite.min() >= -1.0);
  CHECK(batch.composite.max() <= 1.0);
}

TEST_CASE("pipeline: same foreground codes under different backgrounds") {
  RunConfig cfg = cfg32();
  cfg.alpha = 0.0;
  const Model mdl = model(cfg);
  Rng rng(7);
  const LatentCode zf = sample_latent(rng, cfg.d_z), zs = sample_latent(rng, cfg.d_z);
  const LatentCode f[] = {zf, zf}, s[] = {zs, zs};
  const LatentCode b[] = {sample_latent(rng, cfg.d_z), sample_latent(rng, cfg.d_z)};
  const auto out = synthesize(mdl, f, b, s, ForegroundTransform{}, cfg);
  const Tensor m = out.mask.sample(0);
  CHECK(m == out.mask.sample(1));
  const Tensor a = out.composite.sample(0), c = out.composite.sample(1);
  int inside = 0, differs_outside = 0;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) {
        if (m.at(0, 0, y, x) == 1.0) {
          ++inside;
          CHECK(a.at(0, ch, y, x) == c.at(0, ch, y, x));
        } else if (a.at(0, ch, y, x) != c.at(0, ch, y, x)) {
          ++differs_outside;
        }
      }
  CHECK(inside > 0);
  CHECK(differs_outside > 0);
}

TEST_CASE("pipeline: a shift translates the foreground content") {
  RunConfig cfg = cfg32();
  const Model mdl = model(cfg);
  Rng rng(8);
  const LatentCode zf = sample_latent(rng, cfg.d_z), zb = sample_latent(rng, cfg.d_z), zs = sample_latent(rng, cfg.d_z);
  const LatentCode f[] = {zf}, b[] = {zb}, s[] = {zs};
  ForegroundTransform t;
  t.dx = 3;
  t.dy = 2;
  const auto base = synthesize(mdl, f, b, s, ForegroundTransform{}, cfg);
  const auto moved = synthesize(mdl, f, b, s, t, cfg);
  int checked = 0;
  for (int y = 0; y + 2 < kSize; ++y)
    for (int x = 0; x + 3 < kSize; ++x) {
      if (base.mask.at(0, 0, y, x) != 1.0) continue;
      CHECK(moved.mask.at(0, 0, y + 2, x + 3) == 1.0);
      for (int c = 0; c < 3; ++c) CHECK(moved.composite.at(0, c, y + 2, x + 3) == base.composite.at(0, c, y, x));
      ++checked;
    }
  CHECK(checked > 0);
}

TEST_CASE("flip commutes with composition under the pass-through modifier") {
  RunConfig cfg = cfg32();
  cfg.geometry_alignment_enabled = false;
  const Model mdl = model(cfg);
  Rng rng(9);
  const LatentCode f[] = {sample_latent(rng, cfg.d_z)}, b[] = {sample_latent(rng, cfg.d_z)}, s[] = {sample_latent(rng, cfg.d_z)};
  const auto base = synthesize(mdl, f, b, s, ForegroundTransform{}, cfg);
  const auto flipped = synthesize(mdl, f, b, s, flip(), cfg);
  // Flip the foreground layer of the plain composite and paste it on y_bg.
  const auto [fg_t, m_t] = transform_foreground(ImageTensor(base.composite), SpatialMap(base.mask), flip());
  const auto expect = compose(fg_t, binarize_mask(m_t), ImageTensor(base.background));
  CHECK(flipped.composite == expect.tensor());
}

TEST_CASE("style alignment only shifts per-channel statistics of the foreground features") {
  // The aligned features are a per-channel affine map of F_f with a positive
  // slope, so re-standardising them removes every trace of the background.
  RunConfig cfg = cfg32();
  Rng rng(10);
  const auto g = GeneratorParams::create(cfg, rng);
  NoGradGuard guard;
  const Var zf(stack_latents(std::vector<LatentCode>{sample_latent(rng, cfg.d_z)}));
  const Var m = shape_forward(g, Var(stack_latents(std::vector<LatentCode>{sample_latent(rng, cfg.d_z)})));
  const Var f_f = g.foreground(zf, m);
  auto standardised = [&](const Var& b) {
    const Tensor t = ag::soft_adain(f_f, b, 0.2, 1e-5).value();
    const int planes = t.dim(1);
    const std::size_t plane = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
    std::vector<double> mean(planes), sd(planes);
    kernels::serial::plane_stats(planes, plane, t.data(), mean.data(), sd.data());
    Tensor out = t;
    for (int c = 0; c < planes; ++c)
      for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (t[c * plane + i] - mean[c]) / sd[c];
    return out;
  };
  const auto b1 = background_forward(g, Var(stack_latents(std::vector<LatentCode>{sample_latent(rng, cfg.d_z)}))).features;
  const auto b2 = background_forward(g, Var(stack_latents(std::vector<LatentCode>{sample_latent(rng, cfg.d_z)}))).features;
  const Tensor s1 = standardised(b1), s2 = standardised(b2);
  CHECK_FALSE(ag::soft_adain(f_f, b1, 0.2, 1e-5).value() == ag::soft_adain(f_f, b2, 0.2, 1e-5).value());
  double worst = 0;
  for (std::size_t i = 0; i < s1.numel(); ++i) worst = std::max(worst, std::abs(s1[i] - s2[i]));
  CHECK(worst < 1e-3);
}
