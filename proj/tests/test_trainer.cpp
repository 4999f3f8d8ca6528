#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "fbcgan/error.hpp"
#include "fbcgan/trainer.hpp"

using namespace fbc;
namespace fs = std::filesystem;

namespace {

RunConfig small_cfg() {
  RunConfig cfg;
  cfg.batch_size = 2;
  cfg.seed = 17;
  cfg.validate();
  return cfg;
}

const DatasetPair& data() {
  static const DatasetPair ds = make_synthetic_dataset(4, 32, 2);
  return ds;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fbcgan_test_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, Tensor> snapshot(const nn::ParamList& ps) {
  std::map<std::string, Tensor> out;
  for (const auto& p : ps) out.emplace(p.name, p.var.value());
  return out;
}

std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

// Groups with at least one changed tensor, and groups with none.
std::pair<std::set<std::string>, std::set<std::string>> changed_groups(const std::map<std::string, Tensor>& before,
                                                                       const nn::ParamList& after) {
  std::set<std::string> changed, all;
  for (const auto& p : after) {
    all.insert(group_of(p.name));
    if (!(before.at(p.name) == p.var.value())) changed.insert(group_of(p.name));
  }
  std::set<std::string> still;
  for (const auto& g : all)
    if (!changed.count(g)) still.insert(g);
  return {changed, still};
}

bool same_weights(const TrainState& a, const TrainState& b) {
  const auto pa = a.model.parameters(), pb = b.model.parameters();
  const auto da = a.discriminators.parameters(), db = b.discriminators.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(pa[i].var.value() == pb[i].var.value())) return false;
  for (std::size_t i = 0; i < da.size(); ++i)
    if (!(da[i].var.value() == db[i].var.value())) return false;
  return true;
}

}  // namespace

TEST_CASE("Adam follows the bias-corrected update") {
  Var w(Tensor({3}, {1.0, -2.0, 0.5}), true);
  nn::ParamList ps{{"w", w}};
  RunConfig cfg = small_cfg();
  cfg.beta1 = 0.5;
  auto opt = OptimizerState::create(ps, cfg);
  const std::vector<Tensor> grads{Tensor({3}, {0.3, -1.0, 2.0}), Tensor({3}, {-0.1, 0.4, 2.0})};
  std::vector<double> m(3, 0.0), v(3, 0.0), ref{1.0, -2.0, 0.5};
  for (int t = 1; t <= 2; ++t) {
    w.node()->grad = grads[t - 1];
    opt.update(ps);
    for (int k = 0; k < 3; ++k) {
      const double g = grads[t - 1][k];
      m[k] = 0.5 * m[k] + 0.5 * g;
      v[k] = 0.9 * v[k] + 0.1 * g * g;
      ref[k] -= cfg.lr * (m[k] / (1 - std::pow(0.5, t))) / (std::sqrt(v[k] / (1 - std::pow(0.9, t))) + cfg.adam_eps);
    }
    for (int k = 0; k < 3; ++k) CHECK(std::abs(w.value()[k] - ref[k]) <= 1e-15);
  }
}

TEST_CASE("one step moves every parameter group") {
  TrainState s = TrainState::create(small_cfg());
  const auto g0 = snapshot(s.model.parameters());
  const auto d0 = snapshot(s.discriminators.parameters());
  Batch b = draw_batch(s, data());
  const StepResult r = train_step(s, b);
  CHECK(r.discriminator_updated);
  CHECK(std::isfinite(r.generator.total));
  CHECK(s.step == 1);
  const auto [gc, gs] = changed_groups(g0, s.model.parameters());
  const auto [dc, dstill] = changed_groups(d0, s.discriminators.parameters());
  CHECK(gs.empty());
  CHECK(dstill.empty());
  for (const char* want : {"sgen", "gb1", "gf1", "g2", "gb3"}) CHECK(gc.count(want) == 1);
  for (const char* want : {"ds", "dfg", "dbg", "dimg", "dimgseg"}) CHECK(dc.count(want) == 1);
}

TEST_CASE("disabled geometry alignment leaves the modifier untouched") {
  RunConfig cfg = small_cfg();
  cfg.geometry_alignment_enabled = false;
  TrainState s = TrainState::create(cfg);
  const auto g0 = snapshot(s.model.parameters());
  for (int i = 0; i < 2; ++i) train_step(s, draw_batch(s, data()));
  const auto [changed, still] = changed_groups(g0, s.model.parameters());
  CHECK(still == std::set<std::string>{"gb3"});
}

TEST_CASE("generator and discriminator updates touch only their own parameters") {
  RunConfig cfg = small_cfg();
  cfg.d_update_every = 2;
  TrainState s = TrainState::create(cfg);
  train_step(s, draw_batch(s, data()));
  const auto g1 = snapshot(s.model.parameters());
  const auto d1 = snapshot(s.discriminators.parameters());
  const StepResult r = train_step(s, draw_batch(s, data()));
  CHECK_FALSE(r.discriminator_updated);
  CHECK(snapshot(s.discriminators.parameters()) == d1);
  CHECK(changed_groups(g1, s.model.parameters()).second.empty());
  CHECK(s.d_opt.step == 1);
  CHECK(s.g_opt.step == 2);

  // Replay a's generator phase in b, with b's own D phase skipped and a's
  // updated discriminators copied in. Equal generators mean the D phase
  // never wrote to them. Augmentation is off so both phases draw the same
  // random numbers.
  RunConfig plain = small_cfg();
  plain.d_augment = false;
  TrainState a = TrainState::create(plain);
  TrainState b = a.clone();
  const Batch batch = draw_batch(a, data());
  b.rng = a.rng;
  train_step(a, batch);
  b.cfg.d_update_every = 1000;
  b.step = 1;
  const auto da = a.discriminators.parameters(), db = b.discriminators.parameters();
  for (std::size_t i = 0; i < da.size(); ++i) { Var v = db[i].var; v.mutable_value() = da[i].var.value(); }
  b.d_opt = a.d_opt;
  train_step(b, batch);
  const auto ga = a.model.parameters(), gb = b.model.parameters();
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i].var.value() == gb[i].var.value());
}

TEST_CASE("training is reproducible and resumes bit-exactly") {
  const auto dir = scratch("resume");
  TrainState straight = TrainState::create(small_cfg());
  train(straight, data(), 4, {dir / "straight.jsonl", {}, {}});

  TrainState twice = TrainState::create(small_cfg());
  train(twice, data(), 4);
  CHECK(same_weights(straight, twice));
  CHECK(straight.rng.serialize() == twice.rng.serialize());

  TrainState part = TrainState::create(small_cfg());
  train(part, data(), 2, {dir / "resumed.jsonl", dir / "ckpt", {}});
  TrainState loaded = load_checkpoint(dir / "ckpt" / "latest.ckpt");
  CHECK(loaded.step == 2);
  CHECK(same_weights(loaded, part));
  train(loaded, data(), 4, {dir / "resumed.jsonl", {}, {}});
  CHECK(same_weights(loaded, straight));
  CHECK(loaded.g_opt.m == straight.g_opt.m);
  CHECK(loaded.d_opt.v == straight.d_opt.v);

  std::ifstream a(dir / "straight.jsonl"), b(dir / "resumed.jsonl");
  std::string la, lb;
  int rows = 0;
  while (std::getline(a, la)) {
    REQUIRE(std::getline(b, lb));
    CHECK(la == lb);
    const auto row = nlohmann::json::parse(la);
    CHECK(row["step"].get<int>() == ++rows);
    for (const char* key : {"total", "fg_shape", "attn_bg", "imgseg_adv", "d_total"}) CHECK(row.contains(key));
  }
  CHECK(rows == 4);
  CHECK(fs::exists(dir / "ckpt" / "step_0000002.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("the shared output layer survives cloning and checkpoints") {
  const auto dir = scratch("shared");
  TrainState s = TrainState::create(small_cfg());
  train(s, data(), 1, {{}, dir, {}});
  const TrainState l = load_checkpoint(dir / "latest.ckpt");
  CHECK(l.model.generators.shared_output.use_count() >= 1);
  const TrainState c = l.clone();
  CHECK(c.model.generators.shared_output != l.model.generators.shared_output);
  int g2 = 0;
  for (const auto& p : l.model.parameters()) g2 += group_of(p.name) == "g2";
  CHECK(g2 == 2);
  fs::remove_all(dir);
}

TEST_CASE("bad checkpoints are rejected") {
  const auto dir = scratch("bad");
  TrainState s = TrainState::create(small_cfg());
  save_checkpoint(s, dir / "ok.ckpt");
  std::string bytes;
  {
    std::ifstream in(dir / "ok.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  CHECK_THROWS_AS(load_checkpoint(write("v.ckpt", wrong_version)), ValidationError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("m.ckpt", bad_magic)), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(write("t.ckpt", bytes.substr(0, bytes.size() - 100))), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  CHECK_NOTHROW(load_checkpoint(dir / "ok.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("a poisoned parameter aborts the step") {
  TrainState s = TrainState::create(small_cfg());
  s.model.parameters().front().var.mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_step(s, draw_batch(s, data())), TrainingAbort);
}

TEST_CASE("batches wrap around small datasets") {
  RunConfig cfg = small_cfg();
  cfg.batch_size = 6;
  TrainState s = TrainState::create(cfg);
  const Batch b = draw_batch(s, data());
  CHECK(b.fg.size() == 6);
  CHECK(b.bg.size() == 6);
  for (std::size_t i = 0; i < b.fg.size(); ++i) CHECK_FALSE(b.mismatched[i] == b.fg[i].m);
  std::map<std::string, int> seen;
  for (int i = 0; i < 4; ++i) ++seen[b.fg[i].stem];
  CHECK(seen.size() == 4);
}
