#include "fbcgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fbcgan/error.hpp"
#include "fbcgan/log.hpp"

namespace fbc::metrics {

double stable_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0, c = 0.0;
  for (double v : values) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

namespace {

void check_probs(const Tensor& p) {
  if (p.rank() != 2) throw MetricBackendError("classifier output must be [N,K]");
  const int n = p.dim(0), k = p.dim(1);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      const double v = p[static_cast<std::size_t>(i) * k + j];
      if (!(v >= 0.0)) throw MetricBackendError("classifier produced a negative or NaN probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-5) throw MetricBackendError("classifier row does not sum to 1");
  }
}

std::vector<std::vector<double>> rows_of(const Tensor& p) {
  std::vector<std::vector<double>> rows(p.dim(0));
  const int k = p.dim(1);
  for (int i = 0; i < p.dim(0); ++i) rows[i].assign(p.data() + static_cast<std::size_t>(i) * k, p.data() + (i + 1) * k);
  return rows;
}

double split_score(std::span<const std::vector<double>> rows) {
  const std::size_t k = rows.front().size();
  std::vector<double> marginal(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r[j]);
    marginal[j] = stable_sum(std::move(col)) / static_cast<double>(rows.size());
  }
  std::vector<double> kls;
  for (const auto& r : rows) {
    double kl = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (r[j] > 0.0) kl += r[j] * (std::log(r[j]) - std::log(marginal[j]));
    kls.push_back(std::max(kl, 0.0));
  }
  return std::exp(stable_sum(std::move(kls)) / static_cast<double>(rows.size()));
}

ScoreStats stats_of(const std::vector<double>& v) {
  ScoreStats s;
  s.mean = stable_sum(v) / static_cast<double>(v.size());
  std::vector<double> sq;
  for (double x : v) sq.push_back((x - s.mean) * (x - s.mean));
  s.std = std::sqrt(stable_sum(std::move(sq)) / static_cast<double>(v.size()));
  return s;
}

Tensor classify_all(std::span<const ImageTensor> images, const Embedder& classifier) {
  if (!classifier.has_classifier()) throw MetricBackendError("embedder '" + classifier.id() + "' cannot classify");
  std::vector<Tensor> parts;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < images.size(); i += kChunk) {
    const auto chunk = images.subspan(i, std::min(kChunk, images.size() - i));
    parts.push_back(classifier.classify(stack_images(chunk)));
  }
  const int k = parts.front().dim(1);
  Tensor out({static_cast<int>(images.size()), k});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data() + off);
    off += p.numel();
  }
  check_probs(out);
  return out;
}

bool tensor_less(const Tensor& a, const Tensor& b) {
  return std::lexicographical_compare(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

}  // namespace

ScoreStats inception_score_from_probs(const Tensor& probs, int splits, std::uint64_t seed) {
  if (splits < 1) throw InvalidArgument("inception score needs splits >= 1");
  check_probs(probs);
  if (probs.dim(0) < splits) throw InvalidArgument("inception score needs at least as many images as splits");
  auto rows = rows_of(probs);
  std::sort(rows.begin(), rows.end());
  Rng rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng.engine());
  const std::size_t n = rows.size();
  std::vector<double> scores;
  for (int s = 0; s < splits; ++s) {
    const std::size_t b = n * s / splits, e = n * (s + 1) / splits;
    scores.push_back(split_score(std::span(rows).subspan(b, e - b)));
  }
  return stats_of(scores);
}

ScoreStats inception_score(std::span<const ImageTensor> images, const Embedder& classifier, int splits,
                           std::uint64_t seed) {
  if (splits < 1) throw InvalidArgument("inception score needs splits >= 1");
  if (static_cast<int>(images.size()) < splits)
    throw InvalidArgument("inception score needs at least as many images as splits");
  return inception_score_from_probs(classify_all(images, classifier), splits, seed);
}

ScoreStats conditional_is_from_probs(const std::vector<Tensor>& group_probs) {
  if (group_probs.size() < 2) throw InvalidArgument("conditional IS needs at least 2 groups");
  std::vector<double> scores;
  for (const auto& p : group_probs) {
    if (p.rank() != 2 || p.dim(0) == 0) throw InvalidArgument("conditional IS: empty group");
    scores.push_back(inception_score_from_probs(p, 1).mean);
  }
  return stats_of(scores);
}

ScoreStats conditional_is(const GroupedSamples& grouped, const Embedder& classifier) {
  if (grouped.size() < 2) throw InvalidArgument("conditional IS needs at least 2 groups");
  std::vector<Tensor> probs;
  for (const auto& g : grouped) {
    if (g.empty()) throw InvalidArgument("conditional IS: empty group");
    probs.push_back(classify_all(g, classifier));
  }
  return conditional_is_from_probs(probs);
}

double tap_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) throw InvalidArgument("tap_distance: tap count mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (!a[t].same_shape(b[t])) throw InvalidArgument("tap_distance: tap shape mismatch");
    std::vector<double> sq(a[t].numel());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (a[t][i] - b[t][i]) * (a[t][i] - b[t][i]);
    total += stable_sum(std::move(sq)) / static_cast<double>(a[t].numel());
  }
  return total;
}

double lpips_diversity(const GroupedSamples& grouped, const Embedder& embedder, int pairs_per_group,
                       std::uint64_t seed) {
  if (grouped.empty()) throw InvalidArgument("lpips_diversity: no groups");
  if (pairs_per_group < 1) throw InvalidArgument("lpips_diversity: pairs_per_group must be >= 1");
  std::vector<std::vector<Tensor>> groups;
  for (const auto& g : grouped) {
    if (g.size() < 2) throw InvalidArgument("lpips_diversity: every group needs at least 2 images");
    std::vector<Tensor> ts;
    for (const auto& im : g) ts.push_back(im.tensor());
    std::sort(ts.begin(), ts.end(), tensor_less);
    groups.push_back(std::move(ts));
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), tensor_less);
  });
  Rng rng(seed);
  NoGradGuard guard;
  std::vector<double> dists;
  for (const auto& g : groups) {
    const int n = static_cast<int>(g.size());
    const Tensor batch = stack_batch(g);
    const auto taps = embedder.taps(Var(batch));
    auto per_sample = [&](int i) {
      std::vector<Tensor> out;
      for (const auto& t : taps) out.push_back(t.value().sample(i));
      return out;
    };
    for (int p = 0; p < pairs_per_group; ++p) {
      const int i = rng.uniform_int(n);
      int j = rng.uniform_int(n - 1);
      if (j >= i) ++j;
      dists.push_back(tap_distance(per_sample(i), per_sample(j)));
    }
  }
  return stable_sum(dists) / static_cast<double>(dists.size());
}

namespace {

// Mask resampled to the tap grid by area averaging (nearest when not divisible).
std::vector<double> mask_at(const Tensor& m, int h, int w) {
  const int H = m.dim(2), W = m.dim(3);
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  if (H % h == 0 && W % w == 0) {
    const int ky = H / h, kx = W / w;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out[(y / ky) * w + x / kx] += m.at(0, 0, y, x) / (ky * kx);
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out[y * w + x] = m.at(0, 0, y * H / h, x * W / w);
  }
  return out;
}

void centre(std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  s /= static_cast<double>(end - begin);
  for (std::size_t i = begin; i < end; ++i) v[i] -= s;
}

std::vector<std::vector<double>> style_vectors(std::span<const Region> regions, const Embedder& embedder) {
  std::vector<std::vector<double>> out(regions.size());
  constexpr std::size_t kChunk = 64;
  NoGradGuard guard;
  for (std::size_t b0 = 0; b0 < regions.size(); b0 += kChunk) {
    const std::size_t nb = std::min(kChunk, regions.size() - b0);
    std::vector<Tensor> ims;
    for (std::size_t i = 0; i < nb; ++i) ims.push_back(regions[b0 + i].image.tensor());
    const auto taps = embedder.taps(Var(stack_batch(ims)));
    for (std::size_t i = 0; i < nb; ++i) {
      auto& v = out[b0 + i];
      bool empty = false;
      for (const auto& tap : taps) {
        const Tensor& t = tap.value();
        const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
        const auto wm = mask_at(regions[b0 + i].mask.tensor(), h, w);
        const double wsum = std::accumulate(wm.begin(), wm.end(), 0.0);
        if (wsum <= 0.0) {
          empty = true;
          break;
        }
        const std::size_t mb = v.size();
        std::vector<double> means(c), stds(c);
        for (int ch = 0; ch < c; ++ch) {
          double s = 0.0, s2 = 0.0;
          for (int p = 0; p < h * w; ++p) s += wm[p] * t.at(static_cast<int>(i), ch, p / w, p % w);
          const double mu = s / wsum;
          for (int p = 0; p < h * w; ++p) {
            const double d = t.at(static_cast<int>(i), ch, p / w, p % w) - mu;
            s2 += wm[p] * d * d;
          }
          means[ch] = mu;
          stds[ch] = std::sqrt(s2 / wsum);
        }
        v.insert(v.end(), means.begin(), means.end());
        centre(v, mb, v.size());
        const std::size_t sb = v.size();
        v.insert(v.end(), stds.begin(), stds.end());
        centre(v, sb, v.size());
      }
      if (empty) {
        std::size_t len = 0;
        for (const auto& tap : taps) len += 2 * static_cast<std::size_t>(tap.value().dim(1));
        v.assign(len, 0.0);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> style_vector(const Region& region, const Embedder& embedder) {
  return style_vectors(std::span(&region, 1), embedder).front();
}

bool cosine_similarity(std::span<const double> a, std::span<const double> b, double& out) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return false;
  out = std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
  return true;
}

double style_relevance(std::span<const Region> fg_regions, std::span<const Region> bg_regions,
                       const Embedder& embedder) {
  if (fg_regions.size() != bg_regions.size()) throw InvalidArgument("style_relevance: region counts differ");
  if (fg_regions.empty()) throw InvalidArgument("style_relevance: no regions");
  const auto fv = style_vectors(fg_regions, embedder);
  const auto bv = style_vectors(bg_regions, embedder);
  std::vector<double> sims;
  int skipped = 0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    double c;
    if (cosine_similarity(fv[i], bv[i], c))
      sims.push_back(c);
    else
      ++skipped;
  }
  if (skipped > 0) log::warn("style_relevance: skipped " + std::to_string(skipped) + " pair(s) with a zero-norm style vector");
  if (sims.empty()) throw InvalidArgument("style_relevance: every pair had a zero-norm style vector");
  return stable_sum(std::move(sims)) / static_cast<double>(fv.size() - skipped);
}

}  // namespace fbc::metrics
