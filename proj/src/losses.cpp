#include "fbcgan/losses.hpp"

#include <cmath>

#include "fbcgan/error.hpp"
#include "fbcgan/log.hpp"
#include "fbcgan/ops.hpp"

namespace fbc::losses {

const std::array<const char*, LossBundle::kTerms>& LossBundle::names() {
  static const std::array<const char*, kTerms> n{"bg", "fg_adv", "fm", "perceptual", "s_adv",
                                                 "img_adv", "imgseg_adv", "fg_shape", "attn_bg"};
  return n;
}

nlohmann::json LossBundle::to_json() const {
  nlohmann::json j;
  const auto p = parts();
  for (std::size_t i = 0; i < kTerms; ++i) j[names()[i]] = p[i];
  j["total"] = total;
  return j;
}

std::array<double, LossBundle::kTerms> loss_coefficients(const RunConfig& cfg) {
  return {1.0, 1.0, cfg.fm_weight, cfg.p_weight, 1.0, 1.0, 1.0, cfg.lambda1, cfg.lambda2};
}

LossBundle total_loss(LossBundle b, const RunConfig& cfg) {
  const auto p = b.parts();
  const auto w = loss_coefficients(cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < LossBundle::kTerms; ++i) {
    if (!std::isfinite(p[i])) throw TrainingAbort(std::string("non-finite loss term '") + LossBundle::names()[i] + "'");
    total += w[i] * p[i];
  }
  b.total = total;
  return b;
}

Var total_loss(const std::array<Var, LossBundle::kTerms>& parts, const RunConfig& cfg) {
  const auto w = loss_coefficients(cfg);
  Var total;
  for (std::size_t i = 0; i < LossBundle::kTerms; ++i) {
    if (!parts[i].defined()) continue;
    if (!std::isfinite(parts[i].item()))
      throw TrainingAbort(std::string("non-finite loss term '") + LossBundle::names()[i] + "'");
    Var term = w[i] == 1.0 ? parts[i] : ag::scale(parts[i], w[i]);
    total = total.defined() ? ag::add(total, term) : term;
  }
  if (!total.defined()) throw InvalidArgument("total_loss: no terms");
  return total;
}

namespace {

Var scores_var(std::span<const double> s) {
  return Var(Tensor({static_cast<int>(s.size())}, std::vector<double>(s.begin(), s.end())));
}

}  // namespace

Var adv_loss_generator(const Var& probs_fake) { return ag::mean_neg_log(probs_fake, kProbClamp); }

double adv_loss_generator(std::span<const double> scores_fake) {
  if (scores_fake.empty()) throw InvalidArgument("adv_loss_generator: empty batch");
  return adv_loss_generator(scores_var(scores_fake)).item();
}

Var adv_loss_discriminator(const Var& probs_real, const Var& probs_fake) {
  return ag::add(ag::mean_neg_log(probs_real, kProbClamp), ag::mean_neg_log1m(probs_fake, kProbClamp));
}

Var imgseg_adv_loss_discriminator(const Var& real, const Var& mismatch, const Var& fake) {
  return ag::add(ag::add(ag::mean_neg_log(real, kProbClamp), ag::mean_neg_log1m(mismatch, kProbClamp)),
                 ag::mean_neg_log1m(fake, kProbClamp));
}

double imgseg_adv_loss_discriminator(double s_real, double s_mismatch, double s_fake) {
  const double r[] = {s_real}, m[] = {s_mismatch}, f[] = {s_fake};
  return imgseg_adv_loss_discriminator(scores_var(r), scores_var(m), scores_var(f)).item();
}

Var fg_shape_loss(const Var& m_g, const Var& m_i) {
  if (m_g.shape() != m_i.shape())
    throw InvalidArgument("fg_shape_loss: " + shape_str(m_g.shape()) + " vs " + shape_str(m_i.shape()));
  return ag::mse(m_g, m_i);
}

double fg_shape_loss(const SpatialMap& m_g, const SpatialMap& m_i) {
  return fg_shape_loss(Var(m_g.tensor()), Var(m_i.tensor())).item();
}

Var attn_bg_loss(const Var& m_a, const Var& y_bg, const Var& y, const Var& m_i) {
  if (y_bg.shape() != y.shape() || m_a.shape() != m_i.shape())
    throw InvalidArgument("attn_bg_loss: inputs are not co-registered");
  Var keep = ag::mse(ag::mul_map(y_bg, m_a), ag::mul_map(y, m_a));
  Var attend = ag::mse(m_a, ag::one_minus(m_i));
  return ag::add(keep, attend);
}

double attn_bg_loss(const SpatialMap& m_a, const ImageTensor& y_bg, const ImageTensor& y, const SpatialMap& m_i) {
  return attn_bg_loss(Var(m_a.tensor()), Var(y_bg.tensor()), Var(y.tensor()), Var(m_i.tensor())).item();
}

Var feature_matching_loss(const std::vector<Var>& real, const std::vector<Var>& fake) {
  if (real.empty() || real.size() != fake.size())
    throw InvalidArgument("feature_matching_loss: tap lists must be non-empty and of equal length");
  Var acc;
  for (std::size_t t = 0; t < real.size(); ++t) {
    if (real[t].shape() != fake[t].shape())
      throw InvalidArgument("feature_matching_loss: tap " + std::to_string(t) + " shape mismatch");
    Var d = ag::mean_abs_diff(real[t], fake[t]);
    acc = acc.defined() ? ag::add(acc, d) : d;
  }
  return ag::scale(acc, 1.0 / static_cast<double>(real.size()));
}

double feature_matching_loss(std::span<const FeatureMap> real, std::span<const FeatureMap> fake) {
  std::vector<Var> r, f;
  for (const auto& m : real) r.emplace_back(m.tensor());
  for (const auto& m : fake) f.emplace_back(m.tensor());
  return feature_matching_loss(r, f).item();
}

namespace {

Var tap_distance(const std::vector<Var>& a, const std::vector<Var>& b) {
  if (a.empty() || a.size() != b.size()) throw MetricBackendError("embedder returned no feature taps");
  Var acc;
  for (std::size_t t = 0; t < a.size(); ++t) {
    Var d = ag::mean_abs_diff(a[t], b[t]);
    acc = acc.defined() ? ag::add(acc, d) : d;
  }
  return acc;
}

}  // namespace

Var perceptual_loss(const Var& x, const Var& y, const Embedder& embedder) {
  if (x.shape() != y.shape()) throw InvalidArgument("perceptual_loss: image shapes differ");
  return tap_distance(embedder.taps(x), embedder.taps(y));
}

double perceptual_loss(const ImageTensor& x, const ImageTensor& y, const Embedder& embedder) {
  return perceptual_loss(Var(x.tensor()), Var(y.tensor()), embedder).item();
}

Var perceptual_loss_unpaired(const Var& real, const Var& fake, const Embedder& embedder) {
  auto ra = embedder.taps(real);
  auto fa = embedder.taps(fake);
  for (auto& t : ra) t = ag::batch_mean(t);
  for (auto& t : fa) t = ag::batch_mean(t);
  return tap_distance(ra, fa);
}

BackgroundAdvResult background_adv_loss(const Var& real_probs, const Tensor& real_weights, const Var& fake_probs) {
  BackgroundAdvResult out;
  double wsum = 0.0;
  for (double w : real_weights.values()) wsum += w;
  Var fake_term = ag::mean_neg_log1m(fake_probs, kProbClamp);
  if (wsum <= 0.0) {
    log::warn("background loss: no foreground-free real patch in batch, real term skipped");
    out.real_term_skipped = true;
    out.loss = fake_term;
    return out;
  }
  out.loss = ag::add(ag::weighted_neg_log(real_probs, real_weights, kProbClamp), fake_term);
  return out;
}

double background_adv_loss(std::span<const double> real_scores, std::span<const double> real_weights,
                           std::span<const double> fake_scores, bool* real_term_skipped) {
  if (real_scores.size() != real_weights.size()) throw InvalidArgument("background_adv_loss: weight count mismatch");
  if (fake_scores.empty()) throw InvalidArgument("background_adv_loss: empty fake batch");
  Tensor w({static_cast<int>(real_weights.size())}, std::vector<double>(real_weights.begin(), real_weights.end()));
  Var real = real_scores.empty() ? Var(Tensor({0})) : scores_var(real_scores);
  auto r = background_adv_loss(real, w, scores_var(fake_scores));
  if (real_term_skipped) *real_term_skipped = r.real_term_skipped;
  return r.loss.item();
}

}  // namespace fbc::losses
