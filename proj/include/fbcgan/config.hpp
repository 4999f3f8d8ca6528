#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace fbc {

/// Every tunable of a run. Defaults are the published settings where they
/// exist, desk-scale choices otherwise.
struct RunConfig {
  int resolution = 32;
  int d_z = 100;
  double alpha = 0.2;     // soft AdaIN strength
  double lambda1 = 200;   // weight on the generated-mask / shape MSE
  double lambda2 = 50;    // weight on the attention background loss
  double fm_weight = 10;
  double p_weight = 10;
  double lr = 0.0002;
  double beta1 = 0.0;
  double beta2 = 0.9;
  std::uint64_t seed = 0;
  bool style_alignment_enabled = true;
  bool geometry_alignment_enabled = true;

  int batch_size = 8;
  double adam_eps = 1e-8;
  double adain_eps = 1e-5;
  double mask_threshold = 0.5;
  /// Generator channel widths: seed tensor first, then one per upsampling block.
  std::vector<int> gen_widths;
  /// Discriminator widths, one per stride-2 block.
  std::vector<int> disc_widths{16, 32, 64, 64};
  /// BG-Mod encoder widths at full and half resolution.
  std::vector<int> modifier_widths{16, 32};
  int spade_hidden = 8;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  /// Discriminators take an Adam step on every k-th iteration only; the
  /// generators step every iteration.
  int d_update_every = 1;
  /// Translate-and-cutout augmentation on every discriminator input.
  bool d_augment = true;

  /// Style strength actually applied (0 when the alignment is disabled).
  double effective_alpha() const { return style_alignment_enabled ? alpha : 0.0; }
  /// Number of 2x upsampling blocks from the 4x4 seed.
  int upsample_blocks() const;

  /// Fills derived defaults (gen_widths) and checks ranges.
  void validate();
};

std::vector<int> default_gen_widths(int resolution);

/// Reads a JSON object of config keys; absent keys keep their defaults.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Names of all keys accepted in config files and as CLI overrides.
const std::vector<std::string>& config_keys();
/// Sets one key from its textual form, as given on a command line.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace fbc
