#include "fbcgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fbcgan/error.hpp"

namespace fbc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidArgument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_))
    throw InvalidArgument("tensor value count does not match shape " + shape_str(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw InvalidArgument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::sample(int n) const {
  if (rank() != 4 || n < 0 || n >= shape_[0]) throw InvalidArgument("sample index out of range");
  const std::size_t per = numel() / shape_[0];
  Tensor out({1, shape_[1], shape_[2], shape_[3]});
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(per * n), per, out.data_.begin());
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min() const {
  return data_.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return data_.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::max_element(data_.begin(), data_.end());
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("stack_batch: no tensors");
  const Shape& s0 = items.front().shape();
  if (s0.size() != 4) throw InvalidArgument("stack_batch: rank-4 tensors required");
  int total = 0;
  for (const auto& t : items) {
    if (t.rank() != 4 || t.dim(1) != s0[1] || t.dim(2) != s0[2] || t.dim(3) != s0[3])
      throw InvalidArgument("stack_batch: shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(s0));
    total += t.dim(0);
  }
  Tensor out({total, s0[1], s0[2], s0[3]});
  double* dst = out.data();
  for (const auto& t : items) dst = std::copy(t.data(), t.data() + t.numel(), dst);
  return out;
}

}  // namespace fbc
