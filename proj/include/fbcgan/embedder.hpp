#pragma once

#include <string>
#include <vector>

#include "fbcgan/autograd.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/nn.hpp"

namespace fbc {

/// Pluggable image network for perceptual losses and evaluation metrics.
/// Feature taps must be differentiable with respect to the input batch.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::string id() const = 0;
  /// Intermediate activations for an [N,3,H,W] batch, shallow to deep.
  virtual std::vector<Var> taps(const Var& images) const = 0;
  /// Class probabilities [N,K]; rows are non-negative and sum to 1.
  virtual Tensor classify(const Tensor& images) const;
  virtual bool has_classifier() const { return false; }
};

/// Fixed, seeded random-weight convolutional network. Stands in for a
/// pretrained feature network at desk scale.
class RandomConvEmbedder final : public Embedder {
 public:
  explicit RandomConvEmbedder(std::uint64_t seed = 1234, int classes = 10);

  std::string id() const override;
  std::vector<Var> taps(const Var& images) const override;
  Tensor classify(const Tensor& images) const override;
  bool has_classifier() const override { return true; }
  int classes() const { return classes_; }

 private:
  std::uint64_t seed_;
  int classes_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear classifier_;
};

/// Taps = {input}. Useful for checking loss plumbing.
class IdentityEmbedder final : public Embedder {
 public:
  std::string id() const override { return "identity"; }
  std::vector<Var> taps(const Var& images) const override { return {images}; }
};

}  // namespace fbc
