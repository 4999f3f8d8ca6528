#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <iterator>

#include "fbcgan/data.hpp"
#include "fbcgan/error.hpp"
#include "fbcgan/image_io.hpp"
#include "support.hpp"

using namespace fbc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fbcgan_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("synthetic samples satisfy the triple invariants") {
  const auto ds = make_synthetic_dataset(16, 32, 3);
  REQUIRE(ds.foreground_set.size() == 16);
  CHECK(ds.background_set == ds.foreground_set);
  for (const auto& s : ds.foreground_set) {
    CHECK_NOTHROW(validate_sample(s));
    CHECK(s.m.is_binary());
    CHECK(s.m.coverage() >= 0.05);
    CHECK(s.m.coverage() <= 0.60);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          if (s.m.at(y, x) == 0.0) CHECK(s.fg_obj.at(c, y, x) == 0.0);
          else CHECK(s.fg_obj.at(c, y, x) == s.x.at(c, y, x));
  }
  CHECK(make_synthetic_dataset(16, 32, 3).foreground_set == ds.foreground_set);
  CHECK_FALSE(make_synthetic_dataset(16, 32, 4).foreground_set == ds.foreground_set);
  CHECK_THROWS_AS(make_synthetic_dataset(1, 32, 0), InvalidArgument);
}

TEST_CASE("validate_sample rejects broken triples") {
  auto s = make_synthetic_dataset(2, 16, 0).foreground_set[0];
  auto leak = s;
  Tensor t = leak.fg_obj.tensor();
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (s.m.at(y, x) == 0.0) t.at(0, 0, y, x) = 0.5;
  leak.fg_obj = ImageTensor(t);
  CHECK_THROWS_AS(validate_sample(leak), ValidationError);
  auto soft = s;
  soft.m = SpatialMap::filled(16, 16, 0.5);
  CHECK_THROWS_AS(validate_sample(soft), ValidationError);
}

TEST_CASE("saving and loading round-trips exactly") {
  const auto ds = make_synthetic_dataset(10, 32, 9);
  const auto dir = scratch("roundtrip");
  save_samples(ds.foreground_set, dir);
  int warnings = 0;
  const auto back = load_samples(dir, 32, &warnings);
  CHECK(warnings == 0);
  REQUIRE(back.size() == 10);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == ds.foreground_set[i]);

  // Same content written twice gives identical files.
  const auto dir2 = scratch("roundtrip2");
  save_samples(make_synthetic_dataset(10, 32, 9).foreground_set, dir2);
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    CHECK(bytes(e.path()) == bytes(dir2 / fs::relative(e.path(), dir)));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("incomplete triples are skipped with a warning") {
  const auto ds = make_synthetic_dataset(10, 16, 1);
  const auto dir = scratch("orphan");
  save_samples(ds.foreground_set, dir);
  const std::string stem = ds.foreground_set[3].stem;
  fs::remove(dir / "masks" / (stem + ".png"));
  int warnings = 0;
  const auto back = load_samples(dir, 16, &warnings);
  CHECK(back.size() == 9);
  CHECK(warnings == 1);
  for (const auto& s : back) CHECK(s.stem != stem);

  const auto empty = scratch("empty");
  fs::create_directories(empty / "images");
  CHECK_THROWS_AS(load_samples(empty, 16), IoError);
  CHECK_THROWS_AS(load_samples(empty / "nope", 16), IoError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_CASE("foreground and background sets may come from different folders") {
  const auto a = scratch("fg"), b = scratch("bg");
  save_samples(make_synthetic_dataset(4, 16, 1).foreground_set, a);
  save_samples(make_synthetic_dataset(6, 16, 2).foreground_set, b);
  const auto ds = load_dataset(a, b, 16);
  CHECK(ds.foreground_set.size() == 4);
  CHECK(ds.background_set.size() == 6);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("larger images are resized on load and keep binary masks") {
  const auto ds = make_synthetic_dataset(3, 64, 5);
  const auto dir = scratch("resize");
  save_samples(ds.foreground_set, dir);
  for (const auto& s : load_samples(dir, 32)) {
    CHECK(s.x.height() == 32);
    CHECK(s.m.is_binary());
    CHECK_NOTHROW(validate_sample(s));
  }
  fs::remove_all(dir);
}

TEST_CASE("mismatched indices are uniform over the other samples") {
  Rng rng(11);
  const int size = 5, idx = 2, draws = 10000;
  std::vector<int> counts(size, 0);
  for (int i = 0; i < draws; ++i) ++counts[sample_mismatched_index(size, idx, rng)];
  CHECK(counts[idx] == 0);
  const double expect = draws / double(size - 1);
  double chi2 = 0;
  for (int k = 0; k < size; ++k)
    if (k != idx) chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
  // 3 degrees of freedom: the 0.99 quantile is 11.34.
  CHECK(chi2 < 11.34);

  for (int i = 0; i < 50; ++i) {
    CHECK(sample_mismatched_index(2, 0, rng) == 1);
    CHECK(sample_mismatched_index(2, 1, rng) == 0);
  }
  CHECK_THROWS_AS(sample_mismatched_index(1, 0, rng), InvalidArgument);
  CHECK_THROWS_AS(sample_mismatched_index(4, 4, rng), InvalidArgument);

  const auto ds = make_synthetic_dataset(4, 16, 0);
  for (int i = 0; i < 20; ++i) {
    const auto m = sample_mismatched_mask(ds, 1, rng);
    CHECK_FALSE(m == ds.foreground_set[1].m);
  }
}

TEST_CASE("png helpers map 8-bit levels exactly") {
  io::Raster r{4, 2, 3, {}};
  for (int i = 0; i < 24; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 11));
  const Tensor img = io::raster_to_image(r);
  CHECK(img.min() >= -1.0);
  CHECK(img.max() <= 1.0);
  CHECK(io::image_to_raster(img).pixels == r.pixels);
  const auto dir = scratch("png");
  io::write_png(dir / "a.png", r);
  CHECK(io::read_png(dir / "a.png", 3).pixels == r.pixels);
  CHECK_THROWS_AS(io::read_png(dir / "missing.png", 3), IoError);
  fs::remove_all(dir);
}
