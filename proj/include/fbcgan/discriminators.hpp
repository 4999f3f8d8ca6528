#pragma once

#include <variant>
#include <vector>

#include "fbcgan/config.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/nn.hpp"

namespace fbc {

enum class DiscriminatorKind { shape, foreground, background, image };

/// Strided-convolution encoder ending in a sigmoid probability of "real".
/// Global heads give one score per sample; patch heads give a score map.
class Discriminator {
 public:
  struct Output {
    Var prob;                   // [N,1] or [N,1,P,P]
    std::vector<Var> features;  // output of every downsampling block
  };

  Discriminator() = default;
  Discriminator(int in_channels, const std::vector<int>& widths, int resolution, bool patch_head, Rng& rng);

  Output operator()(const Var& x) const;
  int in_channels() const { return in_channels_; }
  bool patch_head() const { return patch_head_; }
  /// Side length of the patch score grid (1 for global heads).
  int grid() const { return grid_; }

  nn::ParamList parameters() const;
  Discriminator clone() const;

 private:
  int in_channels_ = 3;
  bool patch_head_ = false;
  int grid_ = 1;
  std::vector<nn::Conv2d> blocks_;
  nn::Linear global_;
  nn::Conv2d patch_;
};

/// Every adversary of the model.
struct DiscriminatorSet {
  Discriminator shape;       // D_s on masks
  Discriminator foreground;  // D_fg on masked objects, taps feed feature matching
  Discriminator background;  // D_bg, patch-level
  Discriminator image;       // D_img on y
  Discriminator image_seg;   // D_img_seg on concat(image, mask)

  static DiscriminatorSet create(const RunConfig& cfg, Rng& rng);
  nn::ParamList parameters() const;
  DiscriminatorSet clone() const;
};

struct DiscriminatorOutput {
  double score = 0.5;                 // probability of real, in (0,1)
  std::vector<FeatureMap> features;   // populated for the foreground kind
};

using DiscriminatorInput = std::variant<ImageTensor, SpatialMap>;

/// Scores one sample. Shape takes a SpatialMap, the rest an ImageTensor. The
/// background kind reports the mean patch score.
DiscriminatorOutput score_sample(DiscriminatorKind kind, const DiscriminatorInput& input, const DiscriminatorSet& ds);
/// Joint score of an (image, mask) pair, concatenated channel-wise.
DiscriminatorOutput score_image_seg(const ImageTensor& image, const SpatialMap& mask, const DiscriminatorSet& ds);

Var image_seg_forward(const DiscriminatorSet& ds, const Var& image, const Var& mask);

/// Random differentiable augmentation for discriminator inputs, applied to
/// real and fake batches alike: an integer translation with zero fill, then a
/// square cutout. Inputs that must stay registered (an image and its mask)
/// share one draw.
struct Augmentation {
  std::vector<int> dx, dy;
  Tensor keep;  // [N,1,H,W], 0 inside the cutout

  static Augmentation identity(int n, int h, int w);
  /// Shifts of up to h/8 pixels per axis; the cutout side is h/2.
  static Augmentation sample(int n, int h, int w, Rng& rng);
  Var operator()(const Var& x) const;
  /// Translation only, for bookkeeping maps that are not fed to a network.
  Tensor shift(const Tensor& map) const;
};

/// 1 for every patch cell of a grid x grid partition that contains no
/// foreground pixel of `masks` [N,1,H,W]; result is [N,1,grid,grid].
Tensor background_patch_weights(const Tensor& masks, int grid);

}  // namespace fbc
