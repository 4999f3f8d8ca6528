#include "fbcgan/embedder.hpp"

#include <algorithm>
#include <cmath>

#include "fbcgan/error.hpp"
#include "fbcgan/ops.hpp"

namespace fbc {

Tensor Embedder::classify(const Tensor&) const {
  throw MetricBackendError("embedder '" + id() + "' has no classifier head");
}

RandomConvEmbedder::RandomConvEmbedder(std::uint64_t seed, int classes) : seed_(seed), classes_(classes) {
  if (classes < 2) throw InvalidArgument("RandomConvEmbedder needs at least 2 classes");
  Rng rng(seed);
  convs_.emplace_back(3, 8, 3, 1, 1, rng);
  convs_.emplace_back(8, 16, 4, 2, 1, rng);
  convs_.emplace_back(16, 32, 4, 2, 1, rng);
  classifier_ = nn::Linear(32, classes, rng, 2.0);
  for (auto& c : convs_) nn::set_trainable(c.parameters(), false);
  nn::set_trainable(classifier_.parameters(), false);
}

std::string RandomConvEmbedder::id() const {
  return "random-conv-v1(seed=" + std::to_string(seed_) + ",classes=" + std::to_string(classes_) + ")";
}

std::vector<Var> RandomConvEmbedder::taps(const Var& images) const {
  if (images.value().rank() != 4 || images.dim(1) != 3) throw MetricBackendError("embedder expects [N,3,H,W] images");
  std::vector<Var> out;
  Var h = images;
  for (const auto& c : convs_) {
    h = ag::leaky_relu(c(h), nn::kLeak);
    out.push_back(h);
  }
  return out;
}

Tensor RandomConvEmbedder::classify(const Tensor& images) const {
  NoGradGuard guard;
  Var deepest = taps(Var(images)).back();
  const int n = deepest.dim(0), c = deepest.dim(1);
  const std::size_t plane = static_cast<std::size_t>(deepest.dim(2)) * deepest.dim(3);
  Tensor pooled({n, c});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      const double* p = deepest.value().data() + (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      pooled[static_cast<std::size_t>(b) * c + ch] = s / static_cast<double>(plane);
    }
  Tensor logits = classifier_(Var(pooled)).value();
  Tensor probs(logits.shape());
  for (int b = 0; b < n; ++b) {
    const double* l = logits.data() + static_cast<std::size_t>(b) * classes_;
    const double mx = *std::max_element(l, l + classes_);
    double z = 0.0;
    for (int k = 0; k < classes_; ++k) z += std::exp(l[k] - mx);
    for (int k = 0; k < classes_; ++k) probs[static_cast<std::size_t>(b) * classes_ + k] = std::exp(l[k] - mx) / z;
  }
  return probs;
}

}  // namespace fbc
