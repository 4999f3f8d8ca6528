#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbcgan/autograd.hpp"
#include "fbcgan/config.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/embedder.hpp"

namespace fbc::losses {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside logs.
inline constexpr double kProbClamp = 1e-7;

/// Named scalar terms of the overall objective plus their weighted total.
struct LossBundle {
  double bg = 0, fg_adv = 0, fm = 0, perceptual = 0, s_adv = 0, img_adv = 0, imgseg_adv = 0, fg_shape = 0, attn_bg = 0;
  double total = 0;

  static constexpr std::size_t kTerms = 9;
  std::array<double, kTerms> parts() const { return {bg, fg_adv, fm, perceptual, s_adv, img_adv, imgseg_adv, fg_shape, attn_bg}; }
  static const std::array<const char*, kTerms>& names();
  nlohmann::json to_json() const;

  friend bool operator==(const LossBundle&, const LossBundle&) = default;
};

/// Coefficients of each term in the total, in LossBundle::parts() order:
///   bg + (fg_adv + fm_w*fm + p_w*P) + s_adv + img_adv + imgseg_adv + lambda1*fg_shape + lambda2*attn_bg
std::array<double, LossBundle::kTerms> loss_coefficients(const RunConfig& cfg);

/// Fills `total`. A non-finite part raises TrainingAbort naming the term.
LossBundle total_loss(LossBundle parts, const RunConfig& cfg);
/// Weighted sum of graph terms in parts() order.
Var total_loss(const std::array<Var, LossBundle::kTerms>& parts, const RunConfig& cfg);

// Generator-side adversarial loss, non-saturating form: mean(-log D(fake)).
double adv_loss_generator(std::span<const double> scores_fake);
Var adv_loss_generator(const Var& probs_fake);

/// Plain two-sided discriminator loss: mean(-log D(real)) + mean(-log(1 - D(fake))).
Var adv_loss_discriminator(const Var& probs_real, const Var& probs_fake);

/// Matching-aware discriminator objective, negated for minimisation:
///   -[log s_real + log(1 - s_mismatch) + log(1 - s_fake)], batch-averaged.
double imgseg_adv_loss_discriminator(double s_real, double s_mismatch, double s_fake);
Var imgseg_adv_loss_discriminator(const Var& real, const Var& mismatch, const Var& fake);

/// mean((m_g - m_i)^2)
double fg_shape_loss(const SpatialMap& m_g, const SpatialMap& m_i);
Var fg_shape_loss(const Var& m_g, const Var& m_i);

/// mse(m_a*y_bg, m_a*y) + mse(m_a, 1 - m_i), m_a broadcast over channels.
double attn_bg_loss(const SpatialMap& m_a, const ImageTensor& y_bg, const ImageTensor& y, const SpatialMap& m_i);
Var attn_bg_loss(const Var& m_a, const Var& y_bg, const Var& y, const Var& m_i);

/// (1/T) sum_t mean|real_t - fake_t|
double feature_matching_loss(std::span<const FeatureMap> real, std::span<const FeatureMap> fake);
Var feature_matching_loss(const std::vector<Var>& real, const std::vector<Var>& fake);

/// sum over embedder taps of mean|phi_t(x) - phi_t(y)|
double perceptual_loss(const ImageTensor& x, const ImageTensor& y, const Embedder& embedder);
Var perceptual_loss(const Var& x, const Var& y, const Embedder& embedder);
/// Same formula on batch-averaged taps, for unpaired real/fake batches.
Var perceptual_loss_unpaired(const Var& real, const Var& fake, const Embedder& embedder);

struct BackgroundAdvResult {
  Var loss;
  bool real_term_skipped = false;
};

/// Discriminator side of the patch background loss. Real patch scores count
/// only where `real_weights` is 1 (cells free of foreground); every fake
/// patch counts. With no valid real cell the real term is skipped.
BackgroundAdvResult background_adv_loss(const Var& real_probs, const Tensor& real_weights, const Var& fake_probs);
double background_adv_loss(std::span<const double> real_scores, std::span<const double> real_weights,
                           std::span<const double> fake_scores, bool* real_term_skipped = nullptr);

}  // namespace fbc::losses
