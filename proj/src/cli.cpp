#include "fbcgan/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <json.hpp>

#include "fbcgan/data.hpp"
#include "fbcgan/error.hpp"
#include "fbcgan/image_io.hpp"
#include "fbcgan/log.hpp"
#include "fbcgan/sampling.hpp"
#include "fbcgan/trainer.hpp"

namespace fbc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kArchitectureKeys{"resolution", "d_z", "gen_widths", "disc_widths", "modifier_widths",
                                              "spade_hidden"};

/// Adds `--<key>` for every config key except those handled elsewhere.
void add_overrides(CLI::App* app, std::map<std::string, std::string>& into) {
  for (const auto& key : config_keys()) {
    if (key == "seed") continue;
    app->add_option_function<std::string>("--" + key, [&into, key](const std::string& v) { into[key] = v; },
                                          "config override")
        ->group("Config overrides");
  }
}

void apply_all(RunConfig& cfg, const std::map<std::string, std::string>& overrides, bool frozen_architecture) {
  for (const auto& [k, v] : overrides) {
    if (frozen_architecture && kArchitectureKeys.count(k))
      throw InvalidArgument("--" + k + " cannot change the architecture of a trained checkpoint");
    apply_override(cfg, k, v);
  }
  cfg.validate();
}

void write_json(const json& j, const std::string& out) {
  std::cout << j.dump(2) << '\n';
  if (out.empty()) return;
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + out);
  f << j.dump(2) << '\n';
}

std::string sample_name(const char* prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%03zu.png", prefix, i);
  return buf;
}

// Image tensors for every PNG in a folder, sorted by name.
std::vector<ImageTensor> read_image_folder(const fs::path& dir, int resolution) {
  if (!fs::is_directory(dir)) throw IoError("image folder not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> out;
  for (const auto& f : files)
    out.emplace_back(io::resize_smooth(io::raster_to_image(io::read_png(f, 3)), resolution, resolution));
  if (out.empty()) throw IoError("no PNG images in " + dir.string());
  return out;
}

struct Options {
  std::string config, checkpoint, out, data, bg_data, resume, metric = "is", mode = "free", images;
  std::optional<std::uint64_t> seed;
  std::int64_t steps = 2000;
  int n = 8, resolution = 32, groups = 10, samples_per_group = 256, splits = 10, pairs = 19;
  double dx = 0, dy = 0, rot = 0, scale = 1;
  bool flip = false, quiet = false;
  std::map<std::string, std::string> overrides;
};

int cmd_make_synth(const Options& o) {
  const auto ds = make_synthetic_dataset(o.n, o.resolution, o.seed.value_or(0));
  save_samples(ds.foreground_set, o.out);
  log::info("wrote " + std::to_string(o.n) + " synthetic samples to " + o.out);
  return 0;
}

int cmd_train(const Options& o) {
  TrainState state;
  if (!o.resume.empty()) {
    state = load_checkpoint(o.resume);
    if (!o.overrides.empty() || !o.config.empty())
      log::warn("resuming: config flags are ignored, the checkpoint's config is used");
  } else {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    apply_all(cfg, o.overrides, false);
    state = TrainState::create(cfg);
  }
  int warnings = 0;
  const fs::path bg = o.bg_data.empty() ? fs::path(o.data) : fs::path(o.bg_data);
  const DatasetPair ds = load_dataset(o.data, bg, state.cfg.resolution, &warnings);
  TrainOptions opts;
  opts.log_path = fs::path(o.out) / "losses.jsonl";
  opts.checkpoint_dir = o.out;
  const auto t0 = std::chrono::steady_clock::now();
  opts.on_step = [&](const TrainState& s, const StepResult& r) {
    if (s.step % 50 == 0 || s.step == o.steps) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char line[160];
      std::snprintf(line, sizeof line, "step %lld  G %.4f  D %.4f  shape %.5f  (%.1fs)",
                    static_cast<long long>(s.step), r.generator.total, r.discriminator, r.generator.fg_shape, secs);
      log::info(line);
    }
  };
  train(state, ds, o.steps, opts);
  return 0;
}

int cmd_generate(const Options& o) {
  if (o.n == 0) {
    log::info("n = 0: nothing to generate");
    return 0;
  }
  TrainState state = load_checkpoint(o.checkpoint);
  apply_all(state.cfg, o.overrides, true);
  const GenerateMode mode = parse_mode(o.mode);
  Rng rng(o.seed.value_or(0));
  const LatentSet z = make_latents(mode, o.n, state.cfg.d_z, rng);
  const Composition c = synthesize_all(state.model, z, {}, state.cfg);
  const fs::path out(o.out);
  std::vector<Tensor> row;
  for (std::size_t i = 0; i < z.size(); ++i) {
    io::write_png(out / sample_name("composite", i), io::image_to_raster(c.composite, static_cast<int>(i)));
    io::write_png(out / sample_name("mask", i), io::map_to_raster(c.generated_mask, static_cast<int>(i)));
    row.push_back(c.composite.sample(static_cast<int>(i)));
  }
  io::write_grid(out / ("grid_" + mode_name(mode) + ".png"), {row});
  return 0;
}

int cmd_compose(const Options& o) {
  TrainState state = load_checkpoint(o.checkpoint);
  apply_all(state.cfg, o.overrides, true);
  ForegroundTransform t{o.dx, o.dy, o.flip, o.rot, o.scale};
  t.validate();
  Rng rng(o.seed.value_or(0));
  const LatentSet z = make_latents(GenerateMode::free, 1, state.cfg.d_z, rng);
  const Composition c = synthesize_all(state.model, z, t, state.cfg);
  const fs::path out(o.out);
  io::write_png(out / "composite.png", io::image_to_raster(c.composite));
  io::write_png(out / "shape.png", io::map_to_raster(c.shape));
  io::write_png(out / "mask.png", io::map_to_raster(c.mask));
  io::write_png(out / "foreground.png", io::image_to_raster(c.foreground));
  io::write_png(out / "background.png", io::image_to_raster(c.background));
  io::write_png(out / "preliminary.png", io::image_to_raster(c.preliminary));
  io::write_png(out / "generated_mask.png", io::map_to_raster(c.generated_mask));
  io::write_png(out / "compatible_background.png", io::image_to_raster(c.compatible_background));
  return 0;
}

int cmd_evaluate(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(0);
  json report;
  report["metric"] = o.metric;
  report["seed"] = seed;
  report["protocol"] = {{"groups", o.groups}, {"samples_per_group", o.samples_per_group}};

  if (!o.images.empty()) {
    if (o.metric != "is") throw InvalidArgument("--images is only supported with --metric is");
    const RandomConvEmbedder emb;
    const auto images = read_image_folder(o.images, o.resolution);
    const int splits = std::min<int>(o.splits, static_cast<int>(images.size()));
    const auto s = metrics::inception_score(images, emb, splits, seed);
    report["value"] = s.mean;
    report["std"] = s.std;
    report["embedder"] = emb.id();
    report["protocol"] = {{"images", images.size()}, {"splits", splits}, {"source", o.images}};
    write_json(report, o.out);
    return 0;
  }

  TrainState state = load_checkpoint(o.checkpoint);
  apply_all(state.cfg, o.overrides, true);
  const RandomConvEmbedder emb;
  report["embedder"] = emb.id();
  report["checkpoint"] = o.checkpoint;
  report["alpha"] = state.cfg.effective_alpha();
  report["geometry_alignment_enabled"] = state.cfg.geometry_alignment_enabled;
  if (o.metric == "is") {
    Rng rng(seed);
    const int n = o.groups * o.samples_per_group;
    const LatentSet z = make_latents(GenerateMode::free, n, state.cfg.d_z, rng);
    const auto images = split_images(synthesize_all(state.model, z, {}, state.cfg).composite);
    const auto s = metrics::inception_score(images, emb, o.splits, seed);
    report["value"] = s.mean;
    report["std"] = s.std;
    report["protocol"]["splits"] = o.splits;
  } else if (o.metric == "cis") {
    if (o.groups < 2) throw InvalidArgument("cis needs at least 2 groups");
    const auto groups = fixed_background_groups(state.model, state.cfg, o.groups, o.samples_per_group, seed);
    const auto s = metrics::conditional_is(groups, emb);
    report["value"] = s.mean;
    report["std"] = s.std;
  } else if (o.metric == "lpips") {
    const auto groups = fixed_background_groups(state.model, state.cfg, o.groups, o.samples_per_group, seed);
    report["value"] = metrics::lpips_diversity(groups, emb, o.pairs, seed);
    report["std"] = nullptr;
    report["protocol"]["pairs_per_group"] = o.pairs;
  } else {
    std::vector<metrics::Region> fg, bg;
    style_regions(state.model, state.cfg, o.groups * o.samples_per_group, seed, fg, bg);
    report["value"] = metrics::style_relevance(fg, bg, emb);
    report["std"] = nullptr;
    report["note"] = "stand-in formulation: cosine of centred per-channel feature statistics";
  }
  write_json(report, o.out);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Compositional foreground/background image synthesis"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options o;

  auto* synth = app.add_subcommand("make-synth", "Write a procedural dataset");
  synth->add_option("--out", o.out, "output folder")->required();
  synth->add_option("--n", o.n, "sample count")->check(CLI::Range(2, 1 << 20));
  synth->add_option("--resolution", o.resolution)->check(CLI::Range(8, 1024));
  synth->add_option("--seed", o.seed);

  auto* train = app.add_subcommand("train", "Train from scratch or resume");
  train->add_option("--data", o.data, "foreground dataset folder")->required();
  train->add_option("--bg-data", o.bg_data, "background dataset folder (defaults to --data)");
  train->add_option("--steps", o.steps, "total step count")->check(CLI::NonNegativeNumber);
  train->add_option("--out", o.out, "checkpoint and log folder")->required();
  train->add_option("--resume", o.resume, "checkpoint to continue from");
  train->add_option("--config", o.config, "JSON config file");
  train->add_option("--seed", o.seed);
  add_overrides(train, o.overrides);

  auto* gen = app.add_subcommand("generate", "Sample composites");
  gen->add_option("--checkpoint", o.checkpoint)->required();
  gen->add_option("--n", o.n)->check(CLI::NonNegativeNumber);
  gen->add_option("--mode", o.mode)->check(CLI::IsMember({"free", "fixed-bg", "fixed-fg"}));
  gen->add_option("--seed", o.seed);
  gen->add_option("--out", o.out)->required();
  add_overrides(gen, o.overrides);

  auto* comp = app.add_subcommand("compose", "Compose one sample under a foreground transform");
  comp->add_option("--checkpoint", o.checkpoint)->required();
  comp->add_option("--seed", o.seed);
  comp->add_option("--dx", o.dx, "shift right, pixels");
  comp->add_option("--dy", o.dy, "shift down, pixels");
  comp->add_flag("--flip", o.flip, "mirror horizontally");
  comp->add_option("--rot", o.rot, "rotation, degrees counter-clockwise");
  comp->add_option("--scale", o.scale)->check(CLI::PositiveNumber);
  comp->add_option("--out", o.out)->required();
  add_overrides(comp, o.overrides);

  auto* eval = app.add_subcommand("evaluate", "Compute an evaluation metric");
  eval->add_option("--checkpoint", o.checkpoint);
  eval->add_option("--images", o.images, "score a folder of PNGs instead of a checkpoint (is only)");
  eval->add_option("--image-size", o.resolution, "working resolution for --images");
  eval->add_option("--metric", o.metric)->check(CLI::IsMember({"is", "cis", "lpips", "style-relevance"}));
  eval->add_option("--groups", o.groups)->check(CLI::PositiveNumber);
  eval->add_option("--samples-per-group", o.samples_per_group)->check(CLI::PositiveNumber);
  eval->add_option("--splits", o.splits)->check(CLI::PositiveNumber);
  eval->add_option("--pairs", o.pairs)->check(CLI::PositiveNumber);
  eval->add_option("--seed", o.seed);
  eval->add_option("--out", o.out, "also write the report here");
  add_overrides(eval, o.overrides);

  app.add_flag("--quiet", o.quiet, "only warnings and errors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  log::set_quiet(o.quiet);
  try {
    if (synth->parsed()) return cmd_make_synth(o);
    if (train->parsed()) return cmd_train(o);
    if (gen->parsed()) return cmd_generate(o);
    if (comp->parsed()) return cmd_compose(o);
    if (eval->parsed()) {
      if (o.checkpoint.empty() == o.images.empty()) throw InvalidArgument("evaluate needs exactly one of --checkpoint, --images");
      return cmd_evaluate(o);
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace fbc
