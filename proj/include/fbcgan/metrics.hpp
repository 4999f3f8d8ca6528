#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fbcgan/core.hpp"
#include "fbcgan/embedder.hpp"

namespace fbc::metrics {

struct ScoreStats {
  double mean = 0.0;
  double std = 0.0;
};

/// Images generated against one fixed background.
using GroupedSamples = std::vector<std::vector<ImageTensor>>;

/// Order-independent sum: values are sorted, then added with compensation.
double stable_sum(std::vector<double> values);

/// exp(mean_x KL(p(y|x) || p(y))) per split, from an [N,K] probability table.
/// Rows are put in a canonical order and then shuffled with `seed` before
/// being cut into contiguous splits, so the result ignores input order.
ScoreStats inception_score_from_probs(const Tensor& probs, int splits, std::uint64_t seed = 0);
ScoreStats inception_score(std::span<const ImageTensor> images, const Embedder& classifier, int splits = 10,
                           std::uint64_t seed = 0);

/// Single-split IS inside every group; mean/std over groups. Needs >= 2 groups.
ScoreStats conditional_is_from_probs(const std::vector<Tensor>& group_probs);
ScoreStats conditional_is(const GroupedSamples& grouped, const Embedder& classifier);

/// Sum over taps of mean((e1 - e2)^2).
double tap_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

/// Mean tap distance over `pairs_per_group` random distinct pairs per group.
/// Groups and their members are canonically ordered first.
double lpips_diversity(const GroupedSamples& grouped, const Embedder& embedder, int pairs_per_group,
                       std::uint64_t seed);

/// An image restricted to the pixels where mask > 0.
struct Region {
  ImageTensor image;
  SpatialMap mask;
};

/// Per tap: mask-weighted per-channel means then stds, each block centred on
/// its own average. Empty region gives a zero vector.
std::vector<double> style_vector(const Region& region, const Embedder& embedder);
/// Cosine similarity; false when either vector has zero norm.
bool cosine_similarity(std::span<const double> a, std::span<const double> b, double& out);

/// Mean cosine between paired foreground and background style vectors.
/// Pairs with a zero-norm vector are skipped with a warning.
double style_relevance(std::span<const Region> fg_regions, std::span<const Region> bg_regions,
                       const Embedder& embedder);

}  // namespace fbc::metrics
