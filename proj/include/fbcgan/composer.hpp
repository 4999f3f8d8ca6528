#pragma once

#include <utility>
#include <vector>

#include "fbcgan/config.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/model.hpp"

namespace fbc {

/// User-controlled placement of the generated foreground. Applied about the
/// canvas centre in the order flip, scale, rotate, shift.
struct ForegroundTransform {
  double dx = 0.0;              // pixels, +x to the right
  double dy = 0.0;              // pixels, +y downwards
  bool flip_horizontal = false;
  double rotation_deg = 0.0;    // counter-clockwise as displayed
  double scale = 1.0;

  bool is_identity() const { return dx == 0 && dy == 0 && !flip_horizontal && rotation_deg == 0 && scale == 1.0; }
  /// Quarter-turn rotation, unit scale and integer shift: pixels map 1:1.
  bool is_lossless() const;
  void validate() const;
};

/// mask * fg + (1 - mask) * bg_compat. The mask must be binary.
ImageTensor compose(const ImageTensor& fg, const SpatialMap& mask, const ImageTensor& bg_compat);
Tensor compose(const Tensor& fg, const Tensor& mask, const Tensor& bg_compat);

/// Applies the identical geometric map to the foreground and its shape.
/// Vacated pixels are zero in both; content leaving the canvas is clipped.
/// Lossless transforms move pixels exactly; otherwise the image is resampled
/// bilinearly and the mask by nearest neighbour.
std::pair<ImageTensor, SpatialMap> transform_foreground(const ImageTensor& fg, const SpatialMap& shape,
                                                        const ForegroundTransform& t);

/// Every intermediate layer of one synthesis, batched [N,...].
struct Composition {
  Tensor shape;        // m_i after the transform (continuous)
  Tensor mask;         // binarised transformed shape used for blending
  Tensor foreground;   // FG-Gen output after the transform
  Tensor background;   // y_bg
  Tensor preliminary;  // y from BG-Mod
  Tensor generated_mask;  // m_g
  Tensor compatible_background;
  Tensor composite;
};

/// Full pipeline: shape, background, style-aligned foreground, transform,
/// BG-Mod on the transformed shape, composition.
Composition synthesize(const Model& model, std::span<const LatentCode> z_f, std::span<const LatentCode> z_b,
                       std::span<const LatentCode> z_s, const ForegroundTransform& t, const RunConfig& cfg);

ImageTensor compose_with_transform(const LatentCode& z_f, const LatentCode& z_b, const LatentCode& z_s,
                                   const ForegroundTransform& t, const Model& model, const RunConfig& cfg);

}  // namespace fbc
