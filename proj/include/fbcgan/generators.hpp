#pragma once

#include <memory>
#include <utility>

#include "fbcgan/config.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/nn.hpp"

namespace fbc {

/// Strength of the foreground-to-background style alignment.
struct StyleAlignmentConfig {
  double alpha = 0.2;
  double epsilon = 1e-5;

  static StyleAlignmentConfig from(const RunConfig& cfg) { return {cfg.effective_alpha(), cfg.adain_eps}; }
  void validate() const;
};

namespace ag {

/// Adaptive instance normalisation: every content channel of every sample is
/// re-standardised to the population mean/std of the matching style channel,
///   out = std_s * (x - mean_x) / (std_x + eps) + mean_s.
/// Spatial sizes of content and style may differ.
Var adain(const Var& content, const Var& style, double eps);

/// alpha * adain(f, b) + (1 - alpha) * f
Var soft_adain(const Var& foreground, const Var& background, double alpha, double eps);

/// normalized * gamma + beta, all of the same shape.
Var spade_apply(const Var& normalized, const Var& gamma, const Var& beta);

}  // namespace ag

FeatureMap adain(const FeatureMap& content, const FeatureMap& style, double eps = 1e-5);
FeatureMap soft_adain(const FeatureMap& foreground, const FeatureMap& background, double alpha, double eps = 1e-5);

/// Spatially-adaptive modulation: features are instance-normalised, then
/// scaled and shifted by maps predicted from the (resized) shape mask.
class SpadeModulator {
 public:
  SpadeModulator() = default;
  SpadeModulator(int channels, int hidden, Rng& rng);

  struct Modulation {
    Var gamma;
    Var beta;
  };
  /// gamma = 1 + conv_g(h), beta = conv_b(h), h = relu(conv(mask)) at the given size.
  Modulation modulation(const Var& mask, int height, int width) const;
  Var operator()(const Var& features, const Var& mask) const;

  nn::ParamList parameters() const;
  SpadeModulator clone() const;

 private:
  nn::Conv2d hidden_, gamma_, beta_;
};

FeatureMap spade_modulate(const FeatureMap& features, const SpatialMap& mask, const SpadeModulator& params);

/// S-Gen: latent -> soft foreground shape in [0,1].
class ShapeGenerator {
 public:
  ShapeGenerator() = default;
  ShapeGenerator(const RunConfig& cfg, Rng& rng);
  Var operator()(const Var& z) const;
  nn::ParamList parameters() const;
  ShapeGenerator clone() const;

 private:
  nn::Linear project_;
  std::vector<nn::Conv2d> blocks_;
  std::vector<nn::ChannelAffine> norms_;
  nn::Conv2d head_;
};

/// G_b1: latent -> background features F_b.
class BackgroundTrunk {
 public:
  BackgroundTrunk() = default;
  BackgroundTrunk(const RunConfig& cfg, Rng& rng);
  Var operator()(const Var& z) const;
  nn::ParamList parameters() const;
  BackgroundTrunk clone() const;

 private:
  nn::Linear project_;
  std::vector<nn::Conv2d> blocks_;
  std::vector<nn::ChannelAffine> norms_;
};

/// G_f1: latent conditioned on the shape through SPADE -> foreground features F_f.
class ForegroundTrunk {
 public:
  ForegroundTrunk() = default;
  ForegroundTrunk(const RunConfig& cfg, Rng& rng);
  Var operator()(const Var& z, const Var& mask) const;
  nn::ParamList parameters() const;
  ForegroundTrunk clone() const;
  const SpadeModulator& spade(std::size_t block) const { return spades_.at(block); }

 private:
  nn::Linear project_;
  std::vector<nn::Conv2d> blocks_;
  std::vector<SpadeModulator> spades_;
};

/// All generator weights. The final convolution is a single object used as
/// both G_f2 and G_b2, so the two can never drift apart.
struct GeneratorParams {
  int resolution = 32;
  int d_z = 100;
  ShapeGenerator shape;
  BackgroundTrunk background;
  ForegroundTrunk foreground;
  std::shared_ptr<nn::Conv2d> shared_output;

  static GeneratorParams create(const RunConfig& cfg, Rng& rng);
  int feature_channels() const { return shared_output->in_channels(); }
  /// Names: sgen.*, gb1.*, gf1.*, g2.* (shared layer listed once).
  nn::ParamList parameters() const;
  GeneratorParams clone() const;
};

struct BackgroundBatch {
  Var image;     // y_bg
  Var features;  // F_b, the input of G_b2
};

Var shape_forward(const GeneratorParams& g, const Var& z);
/// tanh(G_2(features)) through the shared layer.
Var render_features(const GeneratorParams& g, const Var& features);
BackgroundBatch background_forward(const GeneratorParams& g, const Var& z);
/// F_f = G_f1(z | SPADE(mask)); style-aligned to F_b; rendered by the shared layer.
/// With alpha == 0 the background features are not touched at all.
Var foreground_forward(const GeneratorParams& g, const Var& z, const Var& mask, const Var& bg_features,
                       const StyleAlignmentConfig& style);

SpatialMap generate_shape(const LatentCode& z_s, const GeneratorParams& g);
std::pair<ImageTensor, FeatureMap> generate_background(const LatentCode& z_b, const GeneratorParams& g);
ImageTensor generate_foreground(const LatentCode& z_f, const SpatialMap& shape, const FeatureMap& bg_features,
                                const StyleAlignmentConfig& style, const GeneratorParams& g);

}  // namespace fbc
