#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbcgan/composer.hpp"
#include "fbcgan/metrics.hpp"

namespace fbc {

/// free: every sample has its own codes. fixed_bg: one z_b shared by all.
/// fixed_fg: one (z_f, z_s) shared by all.
enum class GenerateMode { free, fixed_bg, fixed_fg };

GenerateMode parse_mode(const std::string& s);
std::string mode_name(GenerateMode m);

struct LatentSet {
  std::vector<LatentCode> z_f, z_b, z_s;
  std::size_t size() const { return z_f.size(); }
};

/// Codes for sample i are drawn in the order z_f, z_b, z_s; shared codes are
/// drawn once, at sample 0, and reused.
LatentSet make_latents(GenerateMode mode, int n, int d_z, Rng& rng);

/// synthesize() over chunks of at most 64 samples, concatenated.
Composition synthesize_all(const Model& model, const LatentSet& z, const ForegroundTransform& t, const RunConfig& cfg);

/// `groups` sets of `per_group` composites, each set under one fixed background.
metrics::GroupedSamples fixed_background_groups(const Model& model, const RunConfig& cfg, int groups, int per_group,
                                               std::uint64_t seed);

/// Foreground region (composite inside the blend mask) and background region
/// (composite outside it) for `n` free samples.
void style_regions(const Model& model, const RunConfig& cfg, int n, std::uint64_t seed,
                   std::vector<metrics::Region>& fg, std::vector<metrics::Region>& bg);

}  // namespace fbc
