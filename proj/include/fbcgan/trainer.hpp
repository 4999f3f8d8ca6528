#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fbcgan/config.hpp"
#include "fbcgan/data.hpp"
#include "fbcgan/discriminators.hpp"
#include "fbcgan/embedder.hpp"
#include "fbcgan/losses.hpp"
#include "fbcgan/model.hpp"

namespace fbc {

/// Adam moments aligned with a ParamList's order.
struct OptimizerState {
  double lr = 2e-4, beta1 = 0.0, beta2 = 0.9, eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m, v;

  static OptimizerState create(const nn::ParamList& params, const RunConfig& cfg);
  /// One Adam update from the current gradients. Parameters without a
  /// gradient buffer (not reached by the last backward pass) are left alone.
  void update(const nn::ParamList& params);
};

struct TrainState {
  RunConfig cfg;
  Model model;
  DiscriminatorSet discriminators;
  OptimizerState g_opt, d_opt;
  std::int64_t step = 0;
  Rng rng;
  std::uint64_t embedder_seed = 1234;
  std::shared_ptr<const Embedder> embedder;

  /// Fresh weights from cfg.seed.
  static TrainState create(const RunConfig& cfg);
  TrainState clone() const;
};

/// One optimisation batch: real foreground triples, real backgrounds and
/// one mismatched mask per foreground sample.
struct Batch {
  std::vector<Sample> fg;
  std::vector<Sample> bg;
  std::vector<SpatialMap> mismatched;
};

/// Draws cfg.batch_size samples (a shuffled pass, wrapping when the set is
/// smaller than the batch) using state.rng.
Batch draw_batch(TrainState& state, const DatasetPair& ds);

struct StepResult {
  losses::LossBundle generator;
  double discriminator = 0.0;  // meaningful only when discriminator_updated
  bool discriminator_updated = false;
  bool bg_real_term_skipped = false;
};

/// Discriminators (every cfg.d_update_every-th step) then generators, one
/// Adam step each. Non-finite losses
/// raise TrainingAbort naming the term.
StepResult train_step(TrainState& state, const Batch& batch);

struct TrainOptions {
  std::filesystem::path log_path;         // JSON lines, one per step; empty disables
  std::filesystem::path checkpoint_dir;   // periodic + final checkpoints; empty disables
  std::function<void(const TrainState&, const StepResult&)> on_step;
};

/// Runs until state.step == steps. Resuming is just calling this again with a
/// loaded state; the log is appended to.
void train(TrainState& state, const DatasetPair& ds, std::int64_t steps, const TrainOptions& opts = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Raises ValidationError on a bad magic/version or missing tensors, IoError on read failure.
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace fbc
