#include "fbcgan/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fbcgan/error.hpp"

namespace fbc {

int Rng::uniform_int(int n) {
  if (n <= 0) throw InvalidArgument("uniform_int: n must be positive");
  return std::uniform_int_distribution<int>(0, n - 1)(engine_);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_ << ' ' << uniform_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng.engine_ >> rng.normal_ >> rng.uniform_;
  if (!is) throw InvalidArgument("corrupt RNG state");
  return rng;
}

LatentCode sample_latent(Rng& rng, int d_z) {
  if (d_z <= 0) throw InvalidArgument("sample_latent: d_z must be >= 1, got " + std::to_string(d_z));
  LatentCode z;
  z.values.resize(d_z);
  for (double& v : z.values) v = rng.normal();
  return z;
}

Tensor stack_latents(std::span<const LatentCode> codes) {
  if (codes.empty()) throw InvalidArgument("stack_latents: no codes");
  const int d = codes.front().size();
  Tensor out({static_cast<int>(codes.size()), d});
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i].size() != d) throw InvalidArgument("stack_latents: inconsistent latent lengths");
    std::copy(codes[i].values.begin(), codes[i].values.end(), out.data() + i * d);
  }
  return out;
}

ImageTensor::ImageTensor(Tensor data) : data_(std::move(data)) {
  if (data_.rank() == 3) data_ = data_.reshaped({1, data_.dim(0), data_.dim(1), data_.dim(2)});
  if (data_.rank() != 4 || data_.dim(0) != 1 || data_.dim(1) != 3)
    throw InvalidArgument("ImageTensor needs shape [3,H,W], got " + shape_str(data_.shape()));
}

SpatialMap::SpatialMap(Tensor data) : data_(std::move(data)) {
  if (data_.rank() == 2) data_ = data_.reshaped({1, 1, data_.dim(0), data_.dim(1)});
  if (data_.rank() == 3) data_ = data_.reshaped({1, data_.dim(0), data_.dim(1), data_.dim(2)});
  if (data_.rank() != 4 || data_.dim(0) != 1 || data_.dim(1) != 1)
    throw InvalidArgument("SpatialMap needs shape [1,H,W], got " + shape_str(data_.shape()));
  for (double v : data_.values())
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("SpatialMap entry outside [0,1]: " + std::to_string(v));
}

bool SpatialMap::is_binary() const {
  return std::all_of(data_.values().begin(), data_.values().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

double SpatialMap::coverage() const {
  double s = 0.0;
  for (double v : data_.values()) s += v;
  return s / static_cast<double>(data_.numel());
}

FeatureMap::FeatureMap(Tensor data) : data_(std::move(data)) {
  if (data_.rank() == 3) data_ = data_.reshaped({1, data_.dim(0), data_.dim(1), data_.dim(2)});
  if (data_.rank() != 4 || data_.dim(0) != 1) throw InvalidArgument("FeatureMap needs shape [C,H,W]");
  if (!data_.all_finite()) throw InvalidArgument("FeatureMap contains non-finite values");
}

std::vector<ImageTensor> split_images(const Tensor& batch) {
  std::vector<ImageTensor> out;
  for (int n = 0; n < batch.dim(0); ++n) out.emplace_back(batch.sample(n));
  return out;
}

std::vector<SpatialMap> split_maps(const Tensor& batch) {
  std::vector<SpatialMap> out;
  for (int n = 0; n < batch.dim(0); ++n) out.emplace_back(batch.sample(n));
  return out;
}

Tensor stack_images(std::span<const ImageTensor> images) {
  std::vector<Tensor> parts;
  parts.reserve(images.size());
  for (const auto& im : images) parts.push_back(im.tensor());
  return stack_batch(parts);
}

Tensor stack_maps(std::span<const SpatialMap> maps) {
  std::vector<Tensor> parts;
  parts.reserve(maps.size());
  for (const auto& m : maps) parts.push_back(m.tensor());
  return stack_batch(parts);
}

}  // namespace fbc
