#include "fbcgan/sampling.hpp"

#include <algorithm>

#include "fbcgan/error.hpp"

namespace fbc {

GenerateMode parse_mode(const std::string& s) {
  if (s == "free") return GenerateMode::free;
  if (s == "fixed-bg") return GenerateMode::fixed_bg;
  if (s == "fixed-fg") return GenerateMode::fixed_fg;
  throw InvalidArgument("unknown mode '" + s + "' (expected free, fixed-bg or fixed-fg)");
}

std::string mode_name(GenerateMode m) {
  switch (m) {
    case GenerateMode::free: return "free";
    case GenerateMode::fixed_bg: return "fixed-bg";
    case GenerateMode::fixed_fg: return "fixed-fg";
  }
  return "?";
}

LatentSet make_latents(GenerateMode mode, int n, int d_z, Rng& rng) {
  if (n < 0) throw InvalidArgument("sample count must be >= 0");
  LatentSet z;
  for (int i = 0; i < n; ++i) {
    const bool share_fg = mode == GenerateMode::fixed_fg && i > 0;
    const bool share_bg = mode == GenerateMode::fixed_bg && i > 0;
    z.z_f.push_back(share_fg ? z.z_f.front() : sample_latent(rng, d_z));
    z.z_b.push_back(share_bg ? z.z_b.front() : sample_latent(rng, d_z));
    z.z_s.push_back(share_fg ? z.z_s.front() : sample_latent(rng, d_z));
  }
  return z;
}

Composition synthesize_all(const Model& model, const LatentSet& z, const ForegroundTransform& t, const RunConfig& cfg) {
  if (z.size() == 0) throw InvalidArgument("synthesize_all: no latents");
  constexpr std::size_t kChunk = 64;
  std::vector<Composition> parts;
  for (std::size_t b = 0; b < z.size(); b += kChunk) {
    const std::size_t e = std::min(z.size(), b + kChunk);
    auto sl = [&](const std::vector<LatentCode>& v) { return std::span(v).subspan(b, e - b); };
    parts.push_back(synthesize(model, sl(z.z_f), sl(z.z_b), sl(z.z_s), t, cfg));
  }
  if (parts.size() == 1) return parts.front();
  auto cat = [&](Tensor Composition::*f) {
    std::vector<Tensor> ts;
    for (const auto& p : parts) ts.push_back(p.*f);
    return stack_batch(ts);
  };
  Composition out;
  out.shape = cat(&Composition::shape);
  out.mask = cat(&Composition::mask);
  out.foreground = cat(&Composition::foreground);
  out.background = cat(&Composition::background);
  out.preliminary = cat(&Composition::preliminary);
  out.generated_mask = cat(&Composition::generated_mask);
  out.compatible_background = cat(&Composition::compatible_background);
  out.composite = cat(&Composition::composite);
  return out;
}

metrics::GroupedSamples fixed_background_groups(const Model& model, const RunConfig& cfg, int groups, int per_group,
                                               std::uint64_t seed) {
  if (groups < 1 || per_group < 1) throw InvalidArgument("groups and samples per group must be >= 1");
  Rng rng(seed);
  metrics::GroupedSamples out;
  for (int g = 0; g < groups; ++g) {
    const LatentSet z = make_latents(GenerateMode::fixed_bg, per_group, cfg.d_z, rng);
    out.push_back(split_images(synthesize_all(model, z, {}, cfg).composite));
  }
  return out;
}

void style_regions(const Model& model, const RunConfig& cfg, int n, std::uint64_t seed,
                   std::vector<metrics::Region>& fg, std::vector<metrics::Region>& bg) {
  Rng rng(seed);
  const LatentSet z = make_latents(GenerateMode::free, n, cfg.d_z, rng);
  const Composition c = synthesize_all(model, z, {}, cfg);
  const auto images = split_images(c.composite);
  const auto masks = split_maps(c.mask);
  fg.clear();
  bg.clear();
  for (std::size_t i = 0; i < images.size(); ++i) {
    Tensor inv = masks[i].tensor();
    for (auto& v : inv.values()) v = 1.0 - v;
    fg.push_back({images[i], masks[i]});
    bg.push_back({images[i], SpatialMap(std::move(inv))});
  }
}

}  // namespace fbc
