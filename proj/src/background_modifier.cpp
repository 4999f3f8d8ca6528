#include "fbcgan/background_modifier.hpp"

#include "fbcgan/error.hpp"
#include "fbcgan/ops.hpp"

namespace fbc {

BackgroundModifier::BackgroundModifier(const RunConfig& cfg, Rng& rng) {
  const int w0 = cfg.modifier_widths[0];
  const int w1 = cfg.modifier_widths[1];
  enc1_ = nn::Conv2d(4, w0, 3, 1, 1, rng);
  enc2_ = nn::Conv2d(w0, w1, 4, 2, 1, rng);
  mid_ = nn::Conv2d(w1, w1, 3, 1, 1, rng);
  dec_ = nn::Conv2d(w1, w0, 3, 1, 1, rng);
  heads_ = nn::Conv2d(2 * w0, 5, 3, 1, 1, rng, 0.1);
}

ModifierBatch BackgroundModifier::operator()(const Var& y_bg, const Var& shape) const {
  Var in = ag::concat_channels({y_bg, shape});
  Var e1 = ag::leaky_relu(enc1_(in), nn::kLeak);
  Var e2 = ag::leaky_relu(enc2_(e1), nn::kLeak);
  Var m = ag::leaky_relu(mid_(e2), nn::kLeak);
  Var d = ag::leaky_relu(dec_(ag::upsample_nearest2x(m)), nn::kLeak);
  Var h = heads_(ag::concat_channels({d, e1}));
  Var delta = ag::tanh(ag::slice_channels(h, 0, 3));
  return {ag::bounded_residual(y_bg, delta), ag::sigmoid(ag::slice_channels(h, 3, 4)), ag::sigmoid(ag::slice_channels(h, 4, 5))};
}

nn::ParamList BackgroundModifier::parameters() const {
  nn::ParamList out;
  nn::append(out, "enc1", enc1_.parameters());
  nn::append(out, "enc2", enc2_.parameters());
  nn::append(out, "mid", mid_.parameters());
  nn::append(out, "dec", dec_.parameters());
  nn::append(out, "heads", heads_.parameters());
  return out;
}

BackgroundModifier BackgroundModifier::clone() const {
  BackgroundModifier b;
  b.enc1_ = enc1_.clone();
  b.enc2_ = enc2_.clone();
  b.mid_ = mid_.clone();
  b.dec_ = dec_.clone();
  b.heads_ = heads_.clone();
  return b;
}

ModifierBatch modifier_forward(const BackgroundModifier& mod, const Var& y_bg, const Var& shape, bool geometry_enabled) {
  if (y_bg.value().rank() != 4 || shape.value().rank() != 4 || y_bg.dim(1) != 3 || shape.dim(1) != 1 ||
      y_bg.dim(0) != shape.dim(0) || y_bg.dim(2) != shape.dim(2) || y_bg.dim(3) != shape.dim(3))
    throw InvalidArgument("modify_background: image " + shape_str(y_bg.shape()) + " and shape " + shape_str(shape.shape()) +
                          " are not co-registered");
  if (!geometry_enabled) return {y_bg, shape, ag::one_minus(shape)};
  return mod(y_bg, shape);
}

ModifierOutput modify_background(const ImageTensor& y_bg, const SpatialMap& shape, const BackgroundModifier& mod,
                                 bool geometry_enabled) {
  NoGradGuard guard;
  auto out = modifier_forward(mod, Var(y_bg.tensor()), Var(shape.tensor()), geometry_enabled);
  return {ImageTensor(out.y.value()), SpatialMap(out.m_g.value()), SpatialMap(out.m_a.value())};
}

Var extract_compatible_background(const Var& y, const Var& m_g) { return ag::mul_map(y, ag::one_minus(m_g)); }

ImageTensor extract_compatible_background(const ImageTensor& y, const SpatialMap& m_g) {
  if (y.height() != m_g.height() || y.width() != m_g.width())
    throw InvalidArgument("extract_compatible_background: image and mask are not co-registered");
  NoGradGuard guard;
  return ImageTensor(extract_compatible_background(Var(y.tensor()), Var(m_g.tensor())).value());
}

Tensor binarize(const Tensor& m, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("binarize: threshold must lie in (0,1)");
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.numel(); ++i) out[i] = m[i] > threshold ? 1.0 : 0.0;
  return out;
}

SpatialMap binarize_mask(const SpatialMap& m, double threshold) { return SpatialMap(binarize(m.tensor(), threshold)); }

}  // namespace fbc
