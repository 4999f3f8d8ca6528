#include "fbcgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "fbcgan/background_modifier.hpp"
#include "fbcgan/error.hpp"
#include "fbcgan/generators.hpp"
#include "fbcgan/log.hpp"
#include "fbcgan/ops.hpp"

namespace fbc {

OptimizerState OptimizerState::create(const nn::ParamList& params, const RunConfig& cfg) {
  OptimizerState s;
  s.lr = cfg.lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.adam_eps;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros_like(p.var.value()));
    s.v.push_back(Tensor::zeros_like(p.var.value()));
  }
  return s;
}

void OptimizerState::update(const nn::ParamList& params) {
  if (params.size() != m.size()) throw InvalidArgument("optimizer state does not match parameter list");
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& node = params[i].var.node();
    if (node->grad.numel() == 0) continue;
    double* w = node->value.data();
    const double* g = node->grad.data();
    double* mm = m[i].data();
    double* vv = v[i].data();
    for (std::size_t k = 0; k < node->value.numel(); ++k) {
      mm[k] = beta1 * mm[k] + (1.0 - beta1) * g[k];
      vv[k] = beta2 * vv[k] + (1.0 - beta2) * g[k] * g[k];
      w[k] -= lr * (mm[k] / c1) / (std::sqrt(vv[k] / c2) + eps);
    }
  }
}

TrainState TrainState::create(const RunConfig& cfg_in) {
  TrainState s;
  s.cfg = cfg_in;
  s.cfg.validate();
  Rng rng(s.cfg.seed);
  s.model = Model::create(s.cfg, rng);
  s.discriminators = DiscriminatorSet::create(s.cfg, rng);
  s.g_opt = OptimizerState::create(s.model.parameters(), s.cfg);
  s.d_opt = OptimizerState::create(s.discriminators.parameters(), s.cfg);
  s.rng = rng;
  s.embedder = std::make_shared<RandomConvEmbedder>(s.embedder_seed);
  return s;
}

TrainState TrainState::clone() const {
  TrainState s;
  s.cfg = cfg;
  s.model = model.clone();
  s.discriminators = discriminators.clone();
  s.g_opt = g_opt;
  s.d_opt = d_opt;
  s.step = step;
  s.rng = rng;
  s.embedder_seed = embedder_seed;
  s.embedder = embedder;
  return s;
}

namespace {

std::vector<int> draw_indices(int n, int count, Rng& rng) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < count) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    for (int i = 0; i < n && static_cast<int>(out.size()) < count; ++i) out.push_back(perm[i]);
  }
  return out;
}

}  // namespace

Batch draw_batch(TrainState& state, const DatasetPair& ds) {
  if (ds.foreground_set.size() < 2 || ds.background_set.empty())
    throw InvalidArgument("training needs >= 2 foreground samples and a non-empty background set");
  const int b = state.cfg.batch_size;
  const int nf = static_cast<int>(ds.foreground_set.size());
  Batch batch;
  for (int i : draw_indices(nf, b, state.rng)) {
    batch.fg.push_back(ds.foreground_set[i]);
    batch.mismatched.push_back(ds.foreground_set[sample_mismatched_index(nf, i, state.rng)].m);
  }
  for (int i : draw_indices(static_cast<int>(ds.background_set.size()), b, state.rng))
    batch.bg.push_back(ds.background_set[i]);
  return batch;
}

namespace {

template <class F>
Tensor stack_field(const std::vector<Sample>& s, F f) {
  std::vector<Tensor> parts;
  for (const auto& x : s) parts.push_back(f(x));
  return stack_batch(parts);
}

void check_finite(const Var& v, const char* what) {
  if (!std::isfinite(v.item())) throw TrainingAbort(std::string("non-finite discriminator loss '") + what + "'");
}

Var add_all(std::initializer_list<Var> parts) {
  Var acc;
  for (const auto& p : parts) acc = acc.defined() ? ag::add(acc, p) : p;
  return acc;
}

}  // namespace

StepResult train_step(TrainState& state, const Batch& batch) {
  const int n = static_cast<int>(batch.fg.size());
  if (n == 0 || batch.bg.size() != batch.fg.size() || batch.mismatched.size() != batch.fg.size())
    throw InvalidArgument("train_step: batch parts must be non-empty and equally sized");
  const RunConfig& cfg = state.cfg;
  const auto& g = state.model.generators;
  const auto& ds = state.discriminators;
  const nn::ParamList g_params = state.model.parameters();
  const nn::ParamList d_params = ds.parameters();

  const Var x(stack_field(batch.fg, [](const Sample& s) { return s.x.tensor(); }));
  const Var m_real(stack_field(batch.fg, [](const Sample& s) { return s.m.tensor(); }));
  const Var fg_real(stack_field(batch.fg, [](const Sample& s) { return s.fg_obj.tensor(); }));
  const Var x_bg(stack_field(batch.bg, [](const Sample& s) { return s.x.tensor(); }));
  const Tensor bg_masks = stack_field(batch.bg, [](const Sample& s) { return s.m.tensor(); });
  std::vector<Tensor> mw;
  for (const auto& m : batch.mismatched) mw.push_back(m.tensor());
  const Var m_wrong(stack_batch(mw));

  std::vector<LatentCode> zf, zb, zs;
  for (int i = 0; i < n; ++i) zf.push_back(sample_latent(state.rng, cfg.d_z));
  for (int i = 0; i < n; ++i) zb.push_back(sample_latent(state.rng, cfg.d_z));
  for (int i = 0; i < n; ++i) zs.push_back(sample_latent(state.rng, cfg.d_z));

  // Generators, once, with the graph.
  nn::zero_grads(g_params);
  nn::zero_grads(d_params);
  const Var m_i = shape_forward(g, Var(stack_latents(zs)));
  const auto bgb = background_forward(g, Var(stack_latents(zb)));
  const Var y_bg = bgb.image;
  const Var fg = foreground_forward(g, Var(stack_latents(zf)), m_i, bgb.features, StyleAlignmentConfig::from(cfg));
  const Var fg_fake = ag::mul_map(fg, m_i);
  const Var m_i_const = m_i.detach();
  const Var y_bg_const = y_bg.detach();
  const auto mod = modifier_forward(state.model.modifier, y_bg_const, m_i_const, cfg.geometry_alignment_enabled);

  // Every discriminator input goes through its own augmentation draw; the
  // identity is used when augmentation is off.
  auto aug = [&] {
    return cfg.d_augment ? Augmentation::sample(n, cfg.resolution, cfg.resolution, state.rng)
                         : Augmentation::identity(n, cfg.resolution, cfg.resolution);
  };
  auto seg = [&](const Var& image, const Var& mask) {
    const Augmentation a = aug();
    return image_seg_forward(ds, a(image), a(mask));
  };

  // Discriminator phase on detached fakes.
  StepResult result;
  result.discriminator_updated = state.step % cfg.d_update_every == 0;
  if (result.discriminator_updated) {
    nn::set_trainable(d_params, true);
    Var ds_loss = losses::adv_loss_discriminator(ds.shape(aug()(m_real)).prob, ds.shape(aug()(m_i_const)).prob);
    Var dfg_loss = losses::adv_loss_discriminator(ds.foreground(aug()(fg_real)).prob,
                                                  ds.foreground(aug()(fg_fake.detach())).prob);
    const Augmentation bg_aug = aug();
    const Tensor weights = background_patch_weights(bg_aug.shift(bg_masks), ds.background.grid());
    auto dbg = losses::background_adv_loss(ds.background(bg_aug(x_bg)).prob, weights, ds.background(aug()(y_bg_const)).prob);
    result.bg_real_term_skipped = dbg.real_term_skipped;
    Var dimg_loss = losses::adv_loss_discriminator(ds.image(aug()(x)).prob, ds.image(aug()(mod.y.detach())).prob);
    Var dseg_loss = losses::imgseg_adv_loss_discriminator(seg(x, m_real), seg(x, m_wrong),
                                                          seg(mod.y.detach(), mod.m_g.detach()));
    check_finite(ds_loss, "shape");
    check_finite(dfg_loss, "foreground");
    check_finite(dbg.loss, "background");
    check_finite(dimg_loss, "image");
    check_finite(dseg_loss, "image_seg");
    Var d_total = add_all({ds_loss, dfg_loss, dbg.loss, dimg_loss, dseg_loss});
    result.discriminator = d_total.item();
    backward(d_total);
    state.d_opt.update(d_params);
    nn::zero_grads(d_params);
  }

  // Generator phase against the updated, frozen discriminators.
  nn::set_trainable(d_params, false);
  std::array<Var, losses::LossBundle::kTerms> parts;
  try {
    parts[0] = losses::adv_loss_generator(ds.background(aug()(y_bg)).prob);
    auto dfg_fake = ds.foreground(aug()(fg_fake));
    parts[1] = losses::adv_loss_generator(dfg_fake.prob);
    std::vector<Var> real_taps, fake_taps;
    {
      NoGradGuard guard;
      for (const auto& t : ds.foreground(aug()(fg_real)).features) real_taps.push_back(ag::batch_mean(t));
    }
    for (const auto& t : dfg_fake.features) fake_taps.push_back(ag::batch_mean(t));
    parts[2] = losses::feature_matching_loss(real_taps, fake_taps);
    parts[3] = losses::perceptual_loss_unpaired(fg_real, fg_fake, *state.embedder);
    parts[4] = losses::adv_loss_generator(ds.shape(aug()(m_i)).prob);
    parts[5] = losses::adv_loss_generator(ds.image(aug()(mod.y)).prob);
    parts[6] = losses::adv_loss_generator(seg(mod.y, mod.m_g));
    parts[7] = losses::fg_shape_loss(mod.m_g, m_i_const);
    parts[8] = losses::attn_bg_loss(mod.m_a, y_bg_const, mod.y, m_i_const);
  } catch (...) {
    nn::set_trainable(d_params, true);
    throw;
  }
  Var total;
  try {
    total = losses::total_loss(parts, cfg);
  } catch (const TrainingAbort& e) {
    nn::set_trainable(d_params, true);
    std::string dump;
    for (std::size_t i = 0; i < parts.size(); ++i)
      dump += std::string(" ") + losses::LossBundle::names()[i] + "=" + std::to_string(parts[i].item());
    throw TrainingAbort(std::string(e.what()) + " at step " + std::to_string(state.step + 1) + ";" + dump);
  }
  backward(total);
  nn::set_trainable(d_params, true);
  state.g_opt.update(g_params);
  nn::zero_grads(g_params);

  losses::LossBundle b;
  b.bg = parts[0].item();
  b.fg_adv = parts[1].item();
  b.fm = parts[2].item();
  b.perceptual = parts[3].item();
  b.s_adv = parts[4].item();
  b.img_adv = parts[5].item();
  b.imgseg_adv = parts[6].item();
  b.fg_shape = parts[7].item();
  b.attn_bg = parts[8].item();
  result.generator = losses::total_loss(b, cfg);
  ++state.step;
  return result;
}

void train(TrainState& state, const DatasetPair& ds, std::int64_t steps, const TrainOptions& opts) {
  std::ofstream log_out;
  if (!opts.log_path.empty()) {
    if (opts.log_path.has_parent_path()) std::filesystem::create_directories(opts.log_path.parent_path());
    log_out.open(opts.log_path, std::ios::app);
    if (!log_out) throw IoError("cannot open loss log " + opts.log_path.string());
  }
  while (state.step < steps) {
    const Batch batch = draw_batch(state, ds);
    const StepResult r = train_step(state, batch);
    if (log_out.is_open()) {
      nlohmann::json row = r.generator.to_json();
      row["step"] = state.step;
      row["d_total"] = r.discriminator_updated ? nlohmann::json(r.discriminator) : nlohmann::json(nullptr);
      log_out << row.dump() << '\n';
      log_out.flush();
    }
    if (opts.on_step) opts.on_step(state, r);
    const bool periodic = state.cfg.checkpoint_every > 0 && state.step % state.cfg.checkpoint_every == 0;
    if (!opts.checkpoint_dir.empty() && (periodic || state.step == steps)) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%07lld.ckpt", static_cast<long long>(state.step));
      save_checkpoint(state, opts.checkpoint_dir / name);
      save_checkpoint(state, opts.checkpoint_dir / "latest.ckpt");
    }
  }
}

namespace {

constexpr char kMagic[8] = {'F', 'B', 'C', 'G', 'A', 'N', 'C', 'K'};

std::vector<std::pair<std::string, const Tensor*>> checkpoint_tensors(const TrainState& s) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  const auto gp = s.model.parameters();
  const auto dp = s.discriminators.parameters();
  for (const auto& p : gp) out.emplace_back("gen." + p.name, &p.var.value());
  for (const auto& p : dp) out.emplace_back("disc." + p.name, &p.var.value());
  for (std::size_t i = 0; i < gp.size(); ++i) {
    out.emplace_back("gopt.m." + gp[i].name, &s.g_opt.m[i]);
    out.emplace_back("gopt.v." + gp[i].name, &s.g_opt.v[i]);
  }
  for (std::size_t i = 0; i < dp.size(); ++i) {
    out.emplace_back("dopt.m." + dp[i].name, &s.d_opt.m[i]);
    out.emplace_back("dopt.v." + dp[i].name, &s.d_opt.v[i]);
  }
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto tensors = checkpoint_tensors(state);
  nlohmann::json header;
  header["config"] = config_to_json(state.cfg);
  header["step"] = state.step;
  header["rng"] = state.rng.serialize();
  header["embedder_seed"] = state.embedder_seed;
  header["g_opt_step"] = state.g_opt.step;
  header["d_opt_step"] = state.d_opt.step;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors) header["tensors"].push_back({{"name", name}, {"shape", t->shape()}});
  const std::string h = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t hlen = h.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : tensors)
      out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->numel() * sizeof(double)));
    if (!out) throw IoError("failed while writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot finalise checkpoint " + path.string() + ": " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ValidationError(path.string() + " is not a checkpoint (bad magic)");
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion)
    throw ValidationError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kCheckpointVersion));
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!in || hlen > (1u << 26)) throw ValidationError("checkpoint " + path.string() + ": corrupt header length");
  std::string h(hlen, '\0');
  in.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ValidationError("checkpoint " + path.string() + ": truncated header");

  TrainState s;
  std::map<std::string, Shape> listed;
  std::vector<std::string> order;
  try {
    const auto header = nlohmann::json::parse(h);
    s = TrainState::create(config_from_json(header.at("config")));
    s.step = header.at("step").get<std::int64_t>();
    s.rng = Rng::deserialize(header.at("rng").get<std::string>());
    s.embedder_seed = header.at("embedder_seed").get<std::uint64_t>();
    s.embedder = std::make_shared<RandomConvEmbedder>(s.embedder_seed);
    s.g_opt.step = header.at("g_opt_step").get<std::int64_t>();
    s.d_opt.step = header.at("d_opt_step").get<std::int64_t>();
    for (const auto& e : header.at("tensors")) {
      order.push_back(e.at("name").get<std::string>());
      listed[order.back()] = e.at("shape").get<Shape>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": malformed header: " + e.what());
  }

  const auto expected = checkpoint_tensors(s);
  if (expected.size() != order.size())
    throw ValidationError("checkpoint " + path.string() + ": tensor count " + std::to_string(order.size()) +
                          " does not match the architecture (" + std::to_string(expected.size()) + ")");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, t] = expected[i];
    if (order[i] != name || listed[name] != t->shape())
      throw ValidationError("checkpoint " + path.string() + ": tensor '" + order[i] + "' does not match '" + name +
                            "' " + shape_str(t->shape()));
    Tensor* dst = const_cast<Tensor*>(t);
    in.read(reinterpret_cast<char*>(dst->data()), static_cast<std::streamsize>(dst->numel() * sizeof(double)));
    if (!in) throw ValidationError("checkpoint " + path.string() + ": truncated tensor data at '" + name + "'");
  }
  return s;
}

}  // namespace fbc
