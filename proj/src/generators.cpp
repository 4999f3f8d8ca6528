#include "fbcgan/generators.hpp"

#include <cmath>

#include "fbcgan/error.hpp"
#include "fbcgan/kernels.hpp"
#include "fbcgan/ops.hpp"

namespace fbc {

void StyleAlignmentConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("style alpha must lie in [0,1], got " + std::to_string(alpha));
  if (!(epsilon > 0.0)) throw InvalidArgument("style epsilon must be positive");
}

namespace ag {

Var adain(const Var& content, const Var& style, double eps) {
  if (content.value().rank() != 4 || style.value().rank() != 4)
    throw InvalidArgument("adain: NCHW feature maps required");
  if (content.dim(1) != style.dim(1))
    throw InvalidArgument("adain: channel mismatch " + std::to_string(content.dim(1)) + " vs " + std::to_string(style.dim(1)));
  if (content.dim(0) != style.dim(0)) throw InvalidArgument("adain: batch size mismatch");
  const int planes = content.dim(0) * content.dim(1);
  const std::size_t cplane = static_cast<std::size_t>(content.dim(2)) * content.dim(3);
  const std::size_t splane = static_cast<std::size_t>(style.dim(2)) * style.dim(3);
  std::vector<double> mc(planes), sc(planes), ms(planes), ss(planes);
  kernels::plane_stats(planes, cplane, content.value().data(), mc.data(), sc.data());
  kernels::plane_stats(planes, splane, style.value().data(), ms.data(), ss.data());

  Tensor out(content.shape());
  for (int p = 0; p < planes; ++p) {
    const double k = ss[p] / (sc[p] + eps);
    const double* x = content.value().data() + p * cplane;
    double* o = out.data() + p * cplane;
    for (std::size_t i = 0; i < cplane; ++i) o[i] = k * (x[i] - mc[p]) + ms[p];
  }

  return make_result(std::move(out), {content, style},
                     [planes, cplane, splane, eps, mc, sc, ms, ss](Node& self) {
    auto& pc = *self.parents[0];
    auto& ps = *self.parents[1];
    const double nc = static_cast<double>(cplane);
    const double ns = static_cast<double>(splane);
    for (int p = 0; p < planes; ++p) {
      const double* g = self.grad.data() + p * cplane;
      const double* x = pc.value.data() + p * cplane;
      const double d = sc[p] + eps;
      double sg = 0.0, sgc = 0.0;
      for (std::size_t i = 0; i < cplane; ++i) {
        sg += g[i];
        sgc += g[i] * (x[i] - mc[p]);
      }
      if (pc.requires_grad) {
        double* gx = pc.grad_buffer().data() + p * cplane;
        const double a = ss[p] / d;
        const double mean_g = sg / nc;
        const double b = sc[p] > 0.0 ? ss[p] / (d * d) * sgc / (nc * sc[p]) : 0.0;
        for (std::size_t i = 0; i < cplane; ++i) gx[i] += a * (g[i] - mean_g) - b * (x[i] - mc[p]);
      }
      if (ps.requires_grad) {
        // dL/dmean_s = sum g; dL/dstd_s = sum g * (x - mean_x) / d.
        const double d_mean = sg;
        const double d_std = sgc / d;
        const double* s = ps.value.data() + p * splane;
        double* gs = ps.grad_buffer().data() + p * splane;
        const double k = ss[p] > 0.0 ? d_std / (ns * ss[p]) : 0.0;
        for (std::size_t i = 0; i < splane; ++i) gs[i] += d_mean / ns + k * (s[i] - ms[p]);
      }
    }
  });
}

Var soft_adain(const Var& foreground, const Var& background, double alpha, double eps) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("soft_adain: alpha must lie in [0,1], got " + std::to_string(alpha));
  Var aligned = adain(foreground, background, eps);
  return add(scale(aligned, alpha), scale(foreground, 1.0 - alpha));
}

Var spade_apply(const Var& normalized, const Var& gamma, const Var& beta) {
  return add(mul(normalized, gamma), beta);
}

}  // namespace ag

FeatureMap adain(const FeatureMap& content, const FeatureMap& style, double eps) {
  NoGradGuard guard;
  return FeatureMap(ag::adain(Var(content.tensor()), Var(style.tensor()), eps).value());
}

FeatureMap soft_adain(const FeatureMap& foreground, const FeatureMap& background, double alpha, double eps) {
  NoGradGuard guard;
  return FeatureMap(ag::soft_adain(Var(foreground.tensor()), Var(background.tensor()), alpha, eps).value());
}

// ---------------------------------------------------------------------------

SpadeModulator::SpadeModulator(int channels, int hidden, Rng& rng)
    : hidden_(1, hidden, 3, 1, 1, rng), gamma_(hidden, channels, 3, 1, 1, rng, 0.1), beta_(hidden, channels, 3, 1, 1, rng, 0.1) {}

SpadeModulator::Modulation SpadeModulator::modulation(const Var& mask, int height, int width) const {
  if (mask.value().rank() != 4 || mask.dim(1) != 1) throw InvalidArgument("spade: mask must be [N,1,H,W]");
  if (mask.dim(2) % height != 0 || mask.dim(3) % width != 0 || mask.dim(2) / height != mask.dim(3) / width)
    throw InvalidArgument("spade: mask " + shape_str(mask.shape()) + " not resizable to " + std::to_string(height) + "x" +
                          std::to_string(width));
  Var m = ag::avg_pool(mask, mask.dim(2) / height);
  Var h = ag::relu(hidden_(m));
  return {ag::add_scalar(gamma_(h), 1.0), beta_(h)};
}

Var SpadeModulator::operator()(const Var& features, const Var& mask) const {
  if (features.dim(0) != mask.dim(0)) throw InvalidArgument("spade: batch size mismatch");
  auto mod = modulation(mask, features.dim(2), features.dim(3));
  return ag::spade_apply(ag::instance_norm(features, 1e-5), mod.gamma, mod.beta);
}

nn::ParamList SpadeModulator::parameters() const {
  nn::ParamList out;
  nn::append(out, "shared", hidden_.parameters());
  nn::append(out, "gamma", gamma_.parameters());
  nn::append(out, "beta", beta_.parameters());
  return out;
}

SpadeModulator SpadeModulator::clone() const {
  SpadeModulator s;
  s.hidden_ = hidden_.clone();
  s.gamma_ = gamma_.clone();
  s.beta_ = beta_.clone();
  return s;
}

FeatureMap spade_modulate(const FeatureMap& features, const SpatialMap& mask, const SpadeModulator& params) {
  NoGradGuard guard;
  return FeatureMap(params(Var(features.tensor()), Var(mask.tensor())).value());
}

// ---------------------------------------------------------------------------

namespace {

Var project_seed(const nn::Linear& project, const Var& z, int channels) {
  if (z.value().rank() != 2) throw InvalidArgument("latent batch must be [N, d_z]");
  Var h = project(z);
  return ag::leaky_relu(ag::reshape(h, {z.dim(0), channels, 4, 4}), nn::kLeak);
}

}  // namespace

ShapeGenerator::ShapeGenerator(const RunConfig& cfg, Rng& rng) {
  const auto& w = cfg.gen_widths;
  project_ = nn::Linear(cfg.d_z, w[0] * 16, rng);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    blocks_.emplace_back(w[i], w[i + 1], 3, 1, 1, rng);
    norms_.emplace_back(w[i + 1]);
  }
  head_ = nn::Conv2d(w.back(), 1, 3, 1, 1, rng, 0.5);
}

Var ShapeGenerator::operator()(const Var& z) const {
  Var h = project_seed(project_, z, blocks_.front().in_channels());
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    h = ag::leaky_relu(norms_[i](ag::instance_norm(blocks_[i](ag::upsample_nearest2x(h)), 1e-5)), nn::kLeak);
  return ag::sigmoid(head_(h));
}

nn::ParamList ShapeGenerator::parameters() const {
  nn::ParamList out;
  nn::append(out, "project", project_.parameters());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    nn::append(out, "block" + std::to_string(i) + ".conv", blocks_[i].parameters());
    nn::append(out, "block" + std::to_string(i) + ".norm", norms_[i].parameters());
  }
  nn::append(out, "head", head_.parameters());
  return out;
}

ShapeGenerator ShapeGenerator::clone() const {
  ShapeGenerator s;
  s.project_ = project_.clone();
  for (const auto& b : blocks_) s.blocks_.push_back(b.clone());
  for (const auto& n : norms_) s.norms_.push_back(n.clone());
  s.head_ = head_.clone();
  return s;
}

BackgroundTrunk::BackgroundTrunk(const RunConfig& cfg, Rng& rng) {
  const auto& w = cfg.gen_widths;
  project_ = nn::Linear(cfg.d_z, w[0] * 16, rng);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    blocks_.emplace_back(w[i], w[i + 1], 3, 1, 1, rng);
    norms_.emplace_back(w[i + 1]);
  }
}

Var BackgroundTrunk::operator()(const Var& z) const {
  Var h = project_seed(project_, z, blocks_.front().in_channels());
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    h = ag::leaky_relu(norms_[i](ag::instance_norm(blocks_[i](ag::upsample_nearest2x(h)), 1e-5)), nn::kLeak);
  return h;
}

nn::ParamList BackgroundTrunk::parameters() const {
  nn::ParamList out;
  nn::append(out, "project", project_.parameters());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    nn::append(out, "block" + std::to_string(i) + ".conv", blocks_[i].parameters());
    nn::append(out, "block" + std::to_string(i) + ".norm", norms_[i].parameters());
  }
  return out;
}

BackgroundTrunk BackgroundTrunk::clone() const {
  BackgroundTrunk b;
  b.project_ = project_.clone();
  for (const auto& c : blocks_) b.blocks_.push_back(c.clone());
  for (const auto& n : norms_) b.norms_.push_back(n.clone());
  return b;
}

ForegroundTrunk::ForegroundTrunk(const RunConfig& cfg, Rng& rng) {
  const auto& w = cfg.gen_widths;
  project_ = nn::Linear(cfg.d_z, w[0] * 16, rng);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    blocks_.emplace_back(w[i], w[i + 1], 3, 1, 1, rng);
    spades_.emplace_back(w[i + 1], cfg.spade_hidden, rng);
  }
}

Var ForegroundTrunk::operator()(const Var& z, const Var& mask) const {
  Var h = project_seed(project_, z, blocks_.front().in_channels());
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    h = ag::leaky_relu(spades_[i](blocks_[i](ag::upsample_nearest2x(h)), mask), nn::kLeak);
  return h;
}

nn::ParamList ForegroundTrunk::parameters() const {
  nn::ParamList out;
  nn::append(out, "project", project_.parameters());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    nn::append(out, "block" + std::to_string(i) + ".conv", blocks_[i].parameters());
    nn::append(out, "block" + std::to_string(i) + ".spade", spades_[i].parameters());
  }
  return out;
}

ForegroundTrunk ForegroundTrunk::clone() const {
  ForegroundTrunk f;
  f.project_ = project_.clone();
  for (const auto& c : blocks_) f.blocks_.push_back(c.clone());
  for (const auto& s : spades_) f.spades_.push_back(s.clone());
  return f;
}

GeneratorParams GeneratorParams::create(const RunConfig& cfg_in, Rng& rng) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  GeneratorParams g;
  g.resolution = cfg.resolution;
  g.d_z = cfg.d_z;
  g.shape = ShapeGenerator(cfg, rng);
  g.background = BackgroundTrunk(cfg, rng);
  g.foreground = ForegroundTrunk(cfg, rng);
  g.shared_output = std::make_shared<nn::Conv2d>(cfg.gen_widths.back(), 3, 3, 1, 1, rng, 0.5);
  return g;
}

nn::ParamList GeneratorParams::parameters() const {
  nn::ParamList out;
  nn::append(out, "sgen", shape.parameters());
  nn::append(out, "gb1", background.parameters());
  nn::append(out, "gf1", foreground.parameters());
  nn::append(out, "g2", shared_output->parameters());
  return out;
}

GeneratorParams GeneratorParams::clone() const {
  GeneratorParams g;
  g.resolution = resolution;
  g.d_z = d_z;
  g.shape = shape.clone();
  g.background = background.clone();
  g.foreground = foreground.clone();
  g.shared_output = std::make_shared<nn::Conv2d>(shared_output->clone());
  return g;
}

Var shape_forward(const GeneratorParams& g, const Var& z) {
  if (z.value().rank() != 2 || z.dim(1) != g.d_z) throw InvalidArgument("shape generator: latent length must equal d_z");
  return g.shape(z);
}

Var render_features(const GeneratorParams& g, const Var& features) {
  if (features.value().rank() != 4 || features.dim(1) != g.feature_channels())
    throw InvalidArgument("shared output layer expects " + std::to_string(g.feature_channels()) + " feature channels");
  return ag::tanh((*g.shared_output)(features));
}

BackgroundBatch background_forward(const GeneratorParams& g, const Var& z) {
  if (z.value().rank() != 2 || z.dim(1) != g.d_z) throw InvalidArgument("background generator: latent length must equal d_z");
  Var features = g.background(z);
  return {render_features(g, features), features};
}

Var foreground_forward(const GeneratorParams& g, const Var& z, const Var& mask, const Var& bg_features,
                       const StyleAlignmentConfig& style) {
  style.validate();
  if (z.value().rank() != 2 || z.dim(1) != g.d_z) throw InvalidArgument("foreground generator: latent length must equal d_z");
  if (mask.value().rank() != 4 || mask.dim(1) != 1 || mask.dim(2) != g.resolution || mask.dim(3) != g.resolution)
    throw InvalidArgument("foreground generator: shape must be [N,1,R,R] at the configured resolution");
  if (mask.dim(0) != z.dim(0)) throw InvalidArgument("foreground generator: batch size mismatch");
  Var f_f = g.foreground(z, mask);
  if (style.alpha == 0.0) return render_features(g, f_f);
  if (!bg_features.defined() || bg_features.value().rank() != 4 || bg_features.dim(1) != f_f.dim(1))
    throw InvalidArgument("foreground generator: background features must have " + std::to_string(f_f.dim(1)) + " channels");
  return render_features(g, ag::soft_adain(f_f, bg_features, style.alpha, style.epsilon));
}

SpatialMap generate_shape(const LatentCode& z_s, const GeneratorParams& g) {
  NoGradGuard guard;
  const LatentCode codes[] = {z_s};
  return SpatialMap(shape_forward(g, Var(stack_latents(codes))).value());
}

std::pair<ImageTensor, FeatureMap> generate_background(const LatentCode& z_b, const GeneratorParams& g) {
  NoGradGuard guard;
  const LatentCode codes[] = {z_b};
  auto out = background_forward(g, Var(stack_latents(codes)));
  return {ImageTensor(out.image.value()), FeatureMap(out.features.value())};
}

ImageTensor generate_foreground(const LatentCode& z_f, const SpatialMap& shape, const FeatureMap& bg_features,
                                const StyleAlignmentConfig& style, const GeneratorParams& g) {
  NoGradGuard guard;
  const LatentCode codes[] = {z_f};
  Var features = bg_features.tensor().empty() ? Var() : Var(bg_features.tensor());
  return ImageTensor(foreground_forward(g, Var(stack_latents(codes)), Var(shape.tensor()), features, style).value());
}

}  // namespace fbc
