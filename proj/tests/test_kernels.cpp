#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <omp.h>

#include "fbcgan/kernels.hpp"
#include "support.hpp"

using namespace fbc;
using fbc::testing::random_tensor;

namespace {

// Largest difference relative to the largest reference magnitude; the kernels
// reorder sums, so single near-cancelled elements are not meaningful alone.
double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double diff = 0.0, scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(a[i]));
  }
  return diff / scale;
}

std::vector<double> rand_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() * 2 - 1;
  return v;
}

struct ConvCase {
  kernels::ConvGeom g;
  const char* name;
};

std::vector<ConvCase> conv_cases() {
  std::vector<ConvCase> out;
  // batch, ci, h, w, co, k, stride, pad
  out.push_back({{2, 3, 8, 8, 5, 3, 1, 1}, "3x3 same small plane"});
  out.push_back({{3, 4, 16, 16, 7, 4, 2, 1}, "4x4 stride 2"});
  out.push_back({{2, 16, 32, 32, 8, 3, 1, 1}, "3x3 same large plane"});
  out.push_back({{2, 8, 32, 32, 16, 4, 2, 1}, "stride 2 large"});
  out.push_back({{1, 3, 9, 7, 2, 3, 1, 0}, "valid, odd sizes"});
  out.push_back({{2, 5, 4, 4, 3, 3, 1, 1}, "tiny plane"});
  out.push_back({{2, 2, 12, 12, 19, 5, 1, 2}, "5x5 co tail"});
  out.push_back({{1, 1, 32, 32, 1, 3, 1, 1}, "single channel"});
  return out;
}

}  // namespace

TEST_CASE("gemm variants agree with the serial reference across tile tails") {
  Rng rng(1);
  for (int m : {1, 7, 8, 17, 33})
    for (int n : {1, 5, 16, 23, 40})
      for (int k : {1, 9, 64}) {
        auto a = rand_vec(static_cast<std::size_t>(m) * k, rng);
        auto b = rand_vec(static_cast<std::size_t>(k) * n, rng);
        std::vector<double> ref(static_cast<std::size_t>(m) * n, 0.5), got = ref;
        kernels::serial::gemm(m, n, k, a.data(), b.data(), ref.data(), true);
        kernels::gemm(m, n, k, a.data(), b.data(), got.data(), true);
        CHECK(max_rel(ref, got) < 1e-12);

        // A^T B with A stored [k x m]
        std::vector<double> at(a.size());
        kernels::transpose(m, k, a.data(), at.data());
        std::vector<double> tn(ref.size(), 0.0);
        kernels::gemm_tn(m, n, k, at.data(), b.data(), tn.data(), false);
        std::vector<double> plain(ref.size(), 0.0);
        kernels::serial::gemm(m, n, k, a.data(), b.data(), plain.data(), false);
        CHECK(max_rel(plain, tn) < 1e-12);

        // A B^T with B stored [n x k]
        std::vector<double> bt(b.size());
        kernels::transpose(k, n, b.data(), bt.data());
        std::vector<double> nt(ref.size(), 0.0);
        kernels::gemm_nt(m, n, k, a.data(), bt.data(), nt.data(), false);
        CHECK(max_rel(plain, nt) < 1e-12);
      }
}

TEST_CASE("conv forward matches the serial reference") {
  Rng rng(2);
  for (const auto& c : conv_cases()) {
    CAPTURE(c.name);
    const auto& g = c.g;
    auto x = rand_vec(static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, rng);
    auto w = rand_vec(g.out_channels * g.patch_size(), rng);
    auto b = rand_vec(g.out_channels, rng);
    const std::size_t ny = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
    std::vector<double> ref(ny), got(ny);
    kernels::serial::conv2d_forward(g, x.data(), w.data(), b.data(), ref.data());
    kernels::conv2d_forward(g, x.data(), w.data(), b.data(), got.data());
    CHECK(max_rel(ref, got) < 1e-11);
    kernels::serial::conv2d_forward(g, x.data(), w.data(), nullptr, ref.data());
    kernels::conv2d_forward(g, x.data(), w.data(), nullptr, got.data());
    CHECK(max_rel(ref, got) < 1e-11);
  }
}

TEST_CASE("conv backward matches the serial reference, including accumulation") {
  Rng rng(3);
  for (const auto& c : conv_cases()) {
    CAPTURE(c.name);
    const auto& g = c.g;
    const std::size_t nx = static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width;
    const std::size_t ny = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
    auto x = rand_vec(nx, rng);
    auto w = rand_vec(g.out_channels * g.patch_size(), rng);
    auto dy = rand_vec(ny, rng);
    auto dw0 = rand_vec(w.size(), rng);
    auto db0 = rand_vec(g.out_channels, rng);
    std::vector<double> dx_ref(nx, 9.0), dx_got(nx, -9.0);
    auto dw_ref = dw0, dw_got = dw0, db_ref = db0, db_got = db0;
    kernels::serial::conv2d_backward(g, x.data(), w.data(), dy.data(), dx_ref.data(), dw_ref.data(), db_ref.data());
    kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx_got.data(), dw_got.data(), db_got.data());
    CHECK(max_rel(dx_ref, dx_got) < 1e-11);
    CHECK(max_rel(dw_ref, dw_got) < 1e-11);
    CHECK(max_rel(db_ref, db_got) < 1e-11);

    // Partial requests leave the others alone.
    std::vector<double> only_dx(nx);
    kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), only_dx.data(), nullptr, nullptr);
    CHECK(max_rel(dx_ref, only_dx) < 1e-11);
  }
}

TEST_CASE("im2col and col2im are adjoint") {
  Rng rng(4);
  for (const auto& c : conv_cases()) {
    auto g = c.g;
    g.batch = 1;
    const std::size_t nx = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
    const std::size_t ncol = g.patch_size() * g.out_height() * g.out_width();
    auto x = rand_vec(nx, rng);
    auto col = rand_vec(ncol, rng);
    std::vector<double> ix(ncol), cx(nx);
    kernels::im2col(g, x.data(), ix.data());
    kernels::col2im(g, col.data(), cx.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < ncol; ++i) lhs += ix[i] * col[i];
    for (std::size_t i = 0; i < nx; ++i) rhs += x[i] * cx[i];
    CHECK(fbc::testing::rel_err(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("plane stats match the serial reference") {
  Rng rng(5);
  for (std::size_t plane : {1u, 3u, 64u, 1025u}) {
    const int planes = 13;
    auto x = rand_vec(planes * plane, rng);
    std::vector<double> m1(planes), s1(planes), m2(planes), s2(planes);
    kernels::serial::plane_stats(planes, plane, x.data(), m1.data(), s1.data());
    kernels::plane_stats(planes, plane, x.data(), m2.data(), s2.data());
    CHECK(max_rel(m1, m2) < 1e-12);
    CHECK(max_rel(s1, s2) < 1e-12);
  }
}

TEST_CASE("parallel kernels give bit-identical results for any thread count") {
  Rng rng(6);
  const kernels::ConvGeom g{4, 8, 32, 32, 16, 3, 1, 1};
  const std::size_t nx = static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width;
  const std::size_t ny = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
  auto x = rand_vec(nx, rng);
  auto w = rand_vec(g.out_channels * g.patch_size(), rng);
  auto dy = rand_vec(ny, rng);
  const int saved = omp_get_max_threads();
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<double> y(ny), dx(nx), dw(w.size(), 0.0), db(g.out_channels, 0.0);
    kernels::conv2d_forward(g, x.data(), w.data(), nullptr, y.data());
    kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dw.begin(), dw.end());
    y.insert(y.end(), db.begin(), db.end());
    return y;
  };
  const auto one = run(1);
  CHECK(run(3) == one);
  CHECK(run(8) == one);
  omp_set_num_threads(saved);
}
