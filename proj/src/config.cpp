#include "fbcgan/config.hpp"

#include <fstream>

#include "fbcgan/error.hpp"

namespace fbc {

using nlohmann::json;

std::vector<int> default_gen_widths(int resolution) {
  switch (resolution) {
    case 32: return {64, 32, 16, 8};
    case 64: return {128, 64, 32, 16, 8};
    case 128: return {256, 128, 64, 32, 16, 8};
    default: throw ValidationError("resolution must be 32, 64 or 128, got " + std::to_string(resolution));
  }
}

int RunConfig::upsample_blocks() const {
  int blocks = 0;
  for (int r = 4; r < resolution; r *= 2) ++blocks;
  return blocks;
}

void RunConfig::validate() {
  if (resolution != 32 && resolution != 64 && resolution != 128)
    throw ValidationError("resolution must be 32, 64 or 128, got " + std::to_string(resolution));
  if (d_z < 1) throw ValidationError("d_z must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1], got " + std::to_string(alpha));
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  for (double w : {lambda1, lambda2, fm_weight, p_weight})
    if (!(w >= 0.0)) throw ValidationError("loss weights must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam betas must lie in [0,1)");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(adain_eps > 0.0)) throw ValidationError("adain_eps must be positive");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw ValidationError("mask_threshold must lie in (0,1)");
  if (gen_widths.empty()) gen_widths = default_gen_widths(resolution);
  if (static_cast<int>(gen_widths.size()) != upsample_blocks() + 1)
    throw ValidationError("gen_widths needs " + std::to_string(upsample_blocks() + 1) + " entries at this resolution");
  if (disc_widths.empty()) throw ValidationError("disc_widths must not be empty");
  if (resolution >> disc_widths.size() < 1) throw ValidationError("too many discriminator blocks for the resolution");
  if (modifier_widths.size() != 2) throw ValidationError("modifier_widths needs exactly 2 entries");
  for (const auto* ws : {&gen_widths, &disc_widths, &modifier_widths})
    for (int w : *ws)
      if (w < 1) throw ValidationError("channel widths must be positive");
  if (spade_hidden < 1) throw ValidationError("spade_hidden must be positive");
  if (d_update_every < 1) throw ValidationError("d_update_every must be at least 1");
}

json config_to_json(const RunConfig& c) {
  return json{{"resolution", c.resolution},
              {"d_z", c.d_z},
              {"alpha", c.alpha},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"fm_weight", c.fm_weight},
              {"p_weight", c.p_weight},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"seed", c.seed},
              {"style_alignment_enabled", c.style_alignment_enabled},
              {"geometry_alignment_enabled", c.geometry_alignment_enabled},
              {"batch_size", c.batch_size},
              {"adam_eps", c.adam_eps},
              {"adain_eps", c.adain_eps},
              {"mask_threshold", c.mask_threshold},
              {"gen_widths", c.gen_widths},
              {"disc_widths", c.disc_widths},
              {"modifier_widths", c.modifier_widths},
              {"spade_hidden", c.spade_hidden},
              {"checkpoint_every", c.checkpoint_every},
              {"d_update_every", c.d_update_every},
              {"d_augment", c.d_augment}};
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  json merged = config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw ValidationError("unknown config key '" + key + "'");
    merged[key] = value;
  }
  try {
    c.resolution = merged["resolution"].get<int>();
    c.d_z = merged["d_z"].get<int>();
    c.alpha = merged["alpha"].get<double>();
    c.lambda1 = merged["lambda1"].get<double>();
    c.lambda2 = merged["lambda2"].get<double>();
    c.fm_weight = merged["fm_weight"].get<double>();
    c.p_weight = merged["p_weight"].get<double>();
    c.lr = merged["lr"].get<double>();
    c.beta1 = merged["beta1"].get<double>();
    c.beta2 = merged["beta2"].get<double>();
    c.seed = merged["seed"].get<std::uint64_t>();
    c.style_alignment_enabled = merged["style_alignment_enabled"].get<bool>();
    c.geometry_alignment_enabled = merged["geometry_alignment_enabled"].get<bool>();
    c.batch_size = merged["batch_size"].get<int>();
    c.adam_eps = merged["adam_eps"].get<double>();
    c.adain_eps = merged["adain_eps"].get<double>();
    c.mask_threshold = merged["mask_threshold"].get<double>();
    c.gen_widths = merged["gen_widths"].get<std::vector<int>>();
    c.disc_widths = merged["disc_widths"].get<std::vector<int>>();
    c.modifier_widths = merged["modifier_widths"].get<std::vector<int>>();
    c.spade_hidden = merged["spade_hidden"].get<int>();
    c.checkpoint_every = merged["checkpoint_every"].get<int>();
    c.d_update_every = merged["d_update_every"].get<int>();
    c.d_augment = merged["d_augment"].get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " does not parse: " + e.what());
  }
  return config_from_json(j);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    const json defaults = config_to_json(RunConfig{});
    for (auto it = defaults.begin(); it != defaults.end(); ++it) k.push_back(it.key());
    return k;
  }();
  return keys;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  json j = config_to_json(cfg);
  if (!j.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // bare strings
  }
  if (j[key].is_boolean() && parsed.is_number_integer()) parsed = parsed.get<int>() != 0;
  j[key] = parsed;
  cfg = config_from_json(j);
}

}  // namespace fbc
