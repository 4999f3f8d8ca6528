#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fbcgan/tensor.hpp"

namespace fbc {

/// Explicit RNG state. Not thread-safe; every consumer gets it passed in.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  int uniform_int(int n);
  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.serialize() == b.serialize(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Gaussian noise vector driving one generator.
struct LatentCode {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

LatentCode sample_latent(Rng& rng, int d_z);

/// Stacks codes into a [N, d_z] tensor.
Tensor stack_latents(std::span<const LatentCode> codes);

/// 3-channel image in [-1, 1], stored as [1, 3, H, W].
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Tensor data);
  static ImageTensor zeros(int height, int width) { return ImageTensor(Tensor({1, 3, height, width})); }

  const Tensor& tensor() const { return data_; }
  int height() const { return data_.dim(2); }
  int width() const { return data_.dim(3); }
  double at(int c, int y, int x) const { return data_.at(0, c, y, x); }
  double& at(int c, int y, int x) { return data_.at(0, c, y, x); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Tensor data_;
};

/// Single-channel map with entries in [0, 1], stored as [1, 1, H, W].
class SpatialMap {
 public:
  SpatialMap() = default;
  /// Throws InvalidArgument if any entry is outside [0, 1] or non-finite.
  explicit SpatialMap(Tensor data);
  static SpatialMap filled(int height, int width, double v) { return SpatialMap(Tensor({1, 1, height, width}, v)); }

  const Tensor& tensor() const { return data_; }
  int height() const { return data_.dim(2); }
  int width() const { return data_.dim(3); }
  double at(int y, int x) const { return data_.at(0, 0, y, x); }
  bool is_binary() const;
  double coverage() const;

  friend bool operator==(const SpatialMap&, const SpatialMap&) = default;

 private:
  Tensor data_;
};

/// C x H x W activation, stored as [1, C, H, W].
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(Tensor data);

  const Tensor& tensor() const { return data_; }
  int channels() const { return data_.dim(1); }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  Tensor data_;
};

/// Splits an [N, ...] batch into per-sample typed values.
std::vector<ImageTensor> split_images(const Tensor& batch);
std::vector<SpatialMap> split_maps(const Tensor& batch);

Tensor stack_images(std::span<const ImageTensor> images);
Tensor stack_maps(std::span<const SpatialMap> maps);

}  // namespace fbc
