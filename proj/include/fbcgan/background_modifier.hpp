#pragma once

#include "fbcgan/config.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/nn.hpp"

namespace fbc {

/// BG-Mod outputs, co-registered at full resolution.
struct ModifierOutput {
  ImageTensor y;    // preliminary, geometrically aligned image
  SpatialMap m_g;   // generated foreground mask
  SpatialMap m_a;   // attention map (training signal only)
};

struct ModifierBatch {
  Var y;
  Var m_g;
  Var m_a;
};

/// G_b3: a small encoder-decoder over concat(y_bg, shape) with one shared trunk
/// and three heads. The image head is a bounded residual on y_bg, so a zero
/// head output leaves the background untouched.
class BackgroundModifier {
 public:
  BackgroundModifier() = default;
  BackgroundModifier(const RunConfig& cfg, Rng& rng);

  ModifierBatch operator()(const Var& y_bg, const Var& shape) const;
  nn::ParamList parameters() const;
  BackgroundModifier clone() const;

 private:
  nn::Conv2d enc1_, enc2_, mid_, dec_, heads_;
};

/// With geometry alignment disabled the modifier is a pass-through:
/// y = y_bg, m_g = shape, m_a = 1 - shape, and no parameters are touched.
ModifierBatch modifier_forward(const BackgroundModifier& mod, const Var& y_bg, const Var& shape, bool geometry_enabled);

ModifierOutput modify_background(const ImageTensor& y_bg, const SpatialMap& shape, const BackgroundModifier& mod,
                                 bool geometry_enabled = true);

/// (1 - m_g) * y: the background content of y with the foreground region zeroed.
ImageTensor extract_compatible_background(const ImageTensor& y, const SpatialMap& m_g);
Var extract_compatible_background(const Var& y, const Var& m_g);

/// 1 where m > threshold, else 0. threshold must lie in (0, 1).
SpatialMap binarize_mask(const SpatialMap& m, double threshold = 0.5);
Tensor binarize(const Tensor& m, double threshold = 0.5);

}  // namespace fbc
