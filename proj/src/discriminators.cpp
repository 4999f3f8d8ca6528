#include "fbcgan/discriminators.hpp"

#include <algorithm>

#include "fbcgan/error.hpp"
#include "fbcgan/ops.hpp"

namespace fbc {

Discriminator::Discriminator(int in_channels, const std::vector<int>& widths, int resolution, bool patch_head, Rng& rng)
    : in_channels_(in_channels), patch_head_(patch_head) {
  int c = in_channels;
  int r = resolution;
  for (int w : widths) {
    blocks_.emplace_back(c, w, 4, 2, 1, rng);
    c = w;
    r /= 2;
  }
  if (r < 1) throw InvalidArgument("discriminator: too many blocks for the resolution");
  grid_ = patch_head ? r : 1;
  if (patch_head)
    patch_ = nn::Conv2d(c, 1, 3, 1, 1, rng, 0.5);
  else
    global_ = nn::Linear(c * r * r, 1, rng, 0.5);
}

Discriminator::Output Discriminator::operator()(const Var& x) const {
  if (x.value().rank() != 4 || x.dim(1) != in_channels_)
    throw InvalidArgument("discriminator expects " + std::to_string(in_channels_) + " input channels, got " + shape_str(x.shape()));
  Output out;
  Var h = x;
  for (const auto& b : blocks_) {
    h = ag::leaky_relu(b(h), nn::kLeak);
    out.features.push_back(h);
  }
  if (patch_head_) {
    out.prob = ag::sigmoid(patch_(h));
  } else {
    const int flat = static_cast<int>(h.numel() / h.dim(0));
    out.prob = ag::sigmoid(global_(ag::reshape(h, {h.dim(0), flat})));
  }
  return out;
}

nn::ParamList Discriminator::parameters() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) nn::append(out, "block" + std::to_string(i), blocks_[i].parameters());
  nn::append(out, "head", patch_head_ ? patch_.parameters() : global_.parameters());
  return out;
}

Discriminator Discriminator::clone() const {
  Discriminator d = *this;
  d.blocks_.clear();
  for (const auto& b : blocks_) d.blocks_.push_back(b.clone());
  if (patch_head_)
    d.patch_ = patch_.clone();
  else
    d.global_ = global_.clone();
  return d;
}

DiscriminatorSet DiscriminatorSet::create(const RunConfig& cfg_in, Rng& rng) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const auto& w = cfg.disc_widths;
  // Patch discriminator stops one block early so each cell covers a
  // background-sized region rather than half the canvas.
  std::vector<int> patch_widths(w.begin(), w.end() - (w.size() > 1 ? 1 : 0));
  DiscriminatorSet ds;
  ds.shape = Discriminator(1, w, cfg.resolution, false, rng);
  ds.foreground = Discriminator(3, w, cfg.resolution, false, rng);
  ds.background = Discriminator(3, patch_widths, cfg.resolution, true, rng);
  ds.image = Discriminator(3, w, cfg.resolution, false, rng);
  ds.image_seg = Discriminator(4, w, cfg.resolution, false, rng);
  return ds;
}

nn::ParamList DiscriminatorSet::parameters() const {
  nn::ParamList out;
  nn::append(out, "ds", shape.parameters());
  nn::append(out, "dfg", foreground.parameters());
  nn::append(out, "dbg", background.parameters());
  nn::append(out, "dimg", image.parameters());
  nn::append(out, "dimgseg", image_seg.parameters());
  return out;
}

DiscriminatorSet DiscriminatorSet::clone() const {
  return {shape.clone(), foreground.clone(), background.clone(), image.clone(), image_seg.clone()};
}

Var image_seg_forward(const DiscriminatorSet& ds, const Var& image, const Var& mask) {
  if (image.value().rank() != 4 || mask.value().rank() != 4 || image.dim(0) != mask.dim(0) || image.dim(2) != mask.dim(2) ||
      image.dim(3) != mask.dim(3))
    throw InvalidArgument("image/segmentation pair is not co-registered");
  return ds.image_seg(ag::concat_channels({image, mask})).prob;
}

DiscriminatorOutput score_sample(DiscriminatorKind kind, const DiscriminatorInput& input, const DiscriminatorSet& ds) {
  NoGradGuard guard;
  const bool wants_map = kind == DiscriminatorKind::shape;
  if (wants_map != std::holds_alternative<SpatialMap>(input))
    throw InvalidArgument(wants_map ? "shape discriminator needs a SpatialMap" : "this discriminator needs an ImageTensor");
  Var x = wants_map ? Var(std::get<SpatialMap>(input).tensor()) : Var(std::get<ImageTensor>(input).tensor());
  const Discriminator* d = nullptr;
  switch (kind) {
    case DiscriminatorKind::shape: d = &ds.shape; break;
    case DiscriminatorKind::foreground: d = &ds.foreground; break;
    case DiscriminatorKind::background: d = &ds.background; break;
    case DiscriminatorKind::image: d = &ds.image; break;
  }
  auto out = (*d)(x);
  DiscriminatorOutput result;
  double s = 0.0;
  for (double v : out.prob.value().values()) s += v;
  result.score = s / static_cast<double>(out.prob.numel());
  if (kind == DiscriminatorKind::foreground)
    for (const auto& f : out.features) result.features.emplace_back(f.value());
  return result;
}

DiscriminatorOutput score_image_seg(const ImageTensor& image, const SpatialMap& mask, const DiscriminatorSet& ds) {
  NoGradGuard guard;
  return {image_seg_forward(ds, Var(image.tensor()), Var(mask.tensor())).value()[0], {}};
}

Augmentation Augmentation::identity(int n, int h, int w) {
  return {std::vector<int>(n, 0), std::vector<int>(n, 0), Tensor({n, 1, h, w}, 1.0)};
}

Augmentation Augmentation::sample(int n, int h, int w, Rng& rng) {
  Augmentation a = identity(n, h, w);
  const int sy = h / 8, sx = w / 8, ch = h / 2, cw = w / 2;
  for (int b = 0; b < n; ++b) {
    a.dx[b] = rng.uniform_int(2 * sx + 1) - sx;
    a.dy[b] = rng.uniform_int(2 * sy + 1) - sy;
    // Cutout centre anywhere on the canvas; the square is clipped at the border.
    const int cy = rng.uniform_int(h), cx = rng.uniform_int(w);
    for (int y = std::max(0, cy - ch / 2); y < std::min(h, cy - ch / 2 + ch); ++y)
      for (int x = std::max(0, cx - cw / 2); x < std::min(w, cx - cw / 2 + cw); ++x) a.keep.at(b, 0, y, x) = 0.0;
  }
  return a;
}

Var Augmentation::operator()(const Var& x) const { return ag::mul_map(ag::translate(x, dx, dy), Var(keep)); }

Tensor Augmentation::shift(const Tensor& map) const {
  NoGradGuard guard;
  return ag::translate(Var(map), dx, dy).value();
}

Tensor background_patch_weights(const Tensor& masks, int grid) {
  if (masks.rank() != 4 || masks.dim(1) != 1) throw InvalidArgument("background_patch_weights: masks must be [N,1,H,W]");
  const int n = masks.dim(0), h = masks.dim(2), w = masks.dim(3);
  if (grid < 1 || h % grid != 0 || w % grid != 0) throw InvalidArgument("background_patch_weights: grid must divide the size");
  const int ph = h / grid, pw = w / grid;
  Tensor out({n, 1, grid, grid}, 1.0);
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (masks.at(b, 0, y, x) > 0.0) out.at(b, 0, y / ph, x / pw) = 0.0;
  return out;
}

}  // namespace fbc
