#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "fbcgan/config.hpp"
#include "fbcgan/error.hpp"
#include "support.hpp"

using namespace fbc;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("fbcgan_test_core_" + name);
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("latents are deterministic per seed") {
  Rng a(7), b(7), c(8);
  const auto la = sample_latent(a, 4);
  CHECK(la.size() == 4);
  CHECK(la == sample_latent(b, 4));
  CHECK_FALSE(la == sample_latent(c, 4));
  CHECK_THROWS_AS(sample_latent(a, 0), InvalidArgument);
  CHECK_THROWS_AS(sample_latent(a, -3), InvalidArgument);
}

TEST_CASE("latents are standard normal") {
  Rng rng(42);
  const auto z = sample_latent(rng, 100000);
  const double n = static_cast<double>(z.size());
  const double mean = std::accumulate(z.values.begin(), z.values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : z.values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sd - 1.0) < 0.02);
}

TEST_CASE("rng state round-trips") {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) rng.normal();
  Rng copy = Rng::deserialize(rng.serialize());
  CHECK(copy == rng);
  CHECK(copy.normal() == rng.normal());
  CHECK_THROWS_AS(Rng::deserialize("not a state"), InvalidArgument);
}

TEST_CASE("typed values enforce their invariants") {
  CHECK_THROWS_AS(SpatialMap(Tensor({1, 1, 2, 2}, 1.5)), InvalidArgument);
  CHECK_THROWS_AS(SpatialMap(Tensor({1, 1, 2, 2}, -0.1)), InvalidArgument);
  CHECK_THROWS_AS(SpatialMap(Tensor({1, 2, 2, 2}, 0.5)), InvalidArgument);
  CHECK_THROWS_AS(ImageTensor(Tensor({1, 1, 2, 2})), InvalidArgument);
  Tensor bad({1, 2, 2, 2});
  bad[3] = std::nan("");
  CHECK_THROWS_AS(FeatureMap{bad}, InvalidArgument);

  const SpatialMap half(Tensor({1, 1, 2, 2}, {0, 1, 1, 0}));
  CHECK(half.is_binary());
  CHECK(half.coverage() == doctest::Approx(0.5));
  CHECK_FALSE(SpatialMap::filled(2, 2, 0.3).is_binary());
}

TEST_CASE("config defaults are the published settings") {
  RunConfig cfg;
  cfg.validate();
  CHECK(cfg.alpha == 0.2);
  CHECK(cfg.lambda1 == 200);
  CHECK(cfg.lambda2 == 50);
  CHECK(cfg.fm_weight == 10);
  CHECK(cfg.p_weight == 10);
  CHECK(cfg.lr == 0.0002);
  CHECK(cfg.beta1 == 0.0);
  CHECK(cfg.beta2 == 0.9);
  CHECK(cfg.resolution == 32);
  CHECK(cfg.d_z == 100);
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.d_update_every == 1);
  CHECK(cfg.d_augment);
}

TEST_CASE("load_config fills omitted keys") {
  SUBCASE("omitting alpha") {
    const auto cfg = load_config(write_temp("no_alpha.json", R"({"lr": 0.001, "seed": 5})"));
    CHECK(cfg.alpha == 0.2);
    CHECK(cfg.lr == 0.001);
    CHECK(cfg.seed == 5);
  }
  SUBCASE("omitting lr") {
    const auto cfg = load_config(write_temp("no_lr.json", R"({"alpha": 0.4})"));
    CHECK(cfg.lr == 0.0002);
    CHECK(cfg.alpha == 0.4);
  }
  SUBCASE("empty object") {
    const auto cfg = load_config(write_temp("empty.json", "{}"));
    CHECK(config_to_json(cfg) == config_to_json([] { RunConfig c; c.validate(); return c; }()));
  }
}

TEST_CASE("load_config errors") {
  CHECK_THROWS_AS(load_config("/nonexistent/dir/config.json"), IoError);
  CHECK_THROWS_AS(load_config(write_temp("alpha.json", R"({"alpha": 1.5})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("neg_alpha.json", R"({"alpha": -0.1})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("lr.json", R"({"lr": 0})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("weight.json", R"({"lambda1": -1})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("unknown.json", R"({"alhpa": 0.3})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("type.json", R"({"alpha": "high"})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("syntax.json", "{alpha: ")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("res.json", R"({"resolution": 48})")), ValidationError);
  CHECK_THROWS_AS(load_config(write_temp("ratio.json", R"({"d_update_every": 0})")), ValidationError);
}

TEST_CASE("every config key round-trips through JSON and overrides") {
  RunConfig cfg;
  cfg.validate();
  const auto j = config_to_json(cfg);
  for (const auto& key : config_keys()) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }
  CHECK(config_to_json(config_from_json(j)) == j);

  apply_override(cfg, "alpha", "0.4");
  apply_override(cfg, "style_alignment_enabled", "false");
  apply_override(cfg, "disc_widths", "[8,16,32,32]");
  CHECK(cfg.alpha == 0.4);
  CHECK_FALSE(cfg.style_alignment_enabled);
  CHECK(cfg.effective_alpha() == 0.0);
  CHECK(cfg.disc_widths == std::vector<int>{8, 16, 32, 32});
  CHECK_THROWS_AS(apply_override(cfg, "alpha", "2"), ValidationError);
  CHECK_THROWS_AS(apply_override(cfg, "nope", "1"), ValidationError);
}
