#include "fbcgan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fbc::kernels {

namespace {

constexpr int kMr = 8;
constexpr int kNr = 16;

// A element (i, p) lives at a[i * a_row + p * a_col].
template <int Rows>
inline void micro_tile(int n_cols, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col,
                       const double* b, int ldb, double* c, int ldc, bool accumulate) {
  double acc[Rows][kNr];
  for (int r = 0; r < Rows; ++r)
    for (int j = 0; j < kNr; ++j) acc[r][j] = (accumulate && j < n_cols) ? c[r * ldc + j] : 0.0;
  if (n_cols == kNr) {
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int r = 0; r < Rows; ++r) {
        const double av = a[r * a_row + p * a_col];
#pragma omp simd
        for (int j = 0; j < kNr; ++j) acc[r][j] += av * brow[j];
      }
    }
  } else if (n_cols == kNr / 2) {
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int r = 0; r < Rows; ++r) {
        const double av = a[r * a_row + p * a_col];
#pragma omp simd
        for (int j = 0; j < kNr / 2; ++j) acc[r][j] += av * brow[j];
      }
    }
  } else {
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int r = 0; r < Rows; ++r) {
        const double av = a[r * a_row + p * a_col];
        for (int j = 0; j < n_cols; ++j) acc[r][j] += av * brow[j];
      }
    }
  }
  for (int r = 0; r < Rows; ++r)
    for (int j = 0; j < n_cols; ++j) c[r * ldc + j] = acc[r][j];
}

using TileFn = void (*)(int, int, const double*, std::ptrdiff_t, std::ptrdiff_t, const double*, int, double*, int,
                        bool);
constexpr TileFn kTiles[kMr + 1] = {nullptr,        micro_tile<1>, micro_tile<2>, micro_tile<3>, micro_tile<4>,
                                    micro_tile<5>, micro_tile<6>, micro_tile<7>, micro_tile<8>};

// Tiles are visited column panel by column panel so one K x 16 slice of B
// stays cached while every row block consumes it.
void gemm_strided(int m, int n, int k, const double* a, std::ptrdiff_t a_row, std::ptrdiff_t a_col,
                  const double* b, double* c, bool accumulate) {
  const int row_blocks = (m + kMr - 1) / kMr;
  const int col_blocks = (n + kNr - 1) / kNr;
  const long tiles = static_cast<long>(row_blocks) * col_blocks;
#pragma omp parallel for schedule(static) if (tiles > 64 && static_cast<long>(m) * n * k > 200000)
  for (long t = 0; t < tiles; ++t) {
    const int cb = static_cast<int>(t / row_blocks);
    const int rb = static_cast<int>(t % row_blocks);
    const int i0 = rb * kMr;
    const int j0 = cb * kNr;
    const int rows = std::min(kMr, m - i0);
    const int cols = std::min(kNr, n - j0);
    kTiles[rows](cols, k, a + i0 * a_row, a_row, a_col, b + j0, n, c + static_cast<std::ptrdiff_t>(i0) * n + j0, n,
                 accumulate);
  }
}

// C[i][j] (+)= sum_p A[i][p] * B[j][p], both operands row-major with rows of length k.
// Each 4x4 block keeps 8-lane partial sums per entry.
void gemm_rows_dot(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  constexpr int kB = 4, kL = 8;
  const int row_blocks = (m + kB - 1) / kB;
  const int col_blocks = (n + kB - 1) / kB;
  const long tiles = static_cast<long>(row_blocks) * col_blocks;
#pragma omp parallel for schedule(static) if (tiles > 16 && static_cast<long>(m) * n * k > 200000)
  for (long t = 0; t < tiles; ++t) {
    const int i0 = static_cast<int>(t / col_blocks) * kB;
    const int j0 = static_cast<int>(t % col_blocks) * kB;
    const int ri = std::min(kB, m - i0), rj = std::min(kB, n - j0);
    const double* ar[kB];
    const double* br[kB];
    for (int r = 0; r < kB; ++r) {
      ar[r] = a + static_cast<std::ptrdiff_t>(i0 + std::min(r, ri - 1)) * k;
      br[r] = b + static_cast<std::ptrdiff_t>(j0 + std::min(r, rj - 1)) * k;
    }
    double acc[kB][kB][kL] = {};
    const int kv = k - k % kL;
    for (int p = 0; p < kv; p += kL)
      for (int r = 0; r < kB; ++r)
        for (int q = 0; q < kB; ++q)
#pragma omp simd
          for (int l = 0; l < kL; ++l) acc[r][q][l] += ar[r][p + l] * br[q][p + l];
    for (int r = 0; r < ri; ++r)
      for (int q = 0; q < rj; ++q) {
        double s = 0.0;
        for (int l = 0; l < kL; ++l) s += acc[r][q][l];
        for (int p = kv; p < k; ++p) s += ar[r][p] * br[q][p];
        double& dst = c[static_cast<std::ptrdiff_t>(i0 + r) * n + j0 + q];
        dst = accumulate ? dst + s : s;
      }
  }
}

std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buffers[3];
  return buffers[slot];
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  gemm_strided(m, n, k, a, k, 1, b, c, accumulate);
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  gemm_strided(m, n, k, a, 1, m, b, c, accumulate);
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  gemm_rows_dot(m, n, k, a, b, c, accumulate);
}

void transpose(int rows, int cols, const double* src, double* dst) {
  constexpr int kBlock = 32;
  for (int i0 = 0; i0 < rows; i0 += kBlock)
    for (int j0 = 0; j0 < cols; j0 += kBlock) {
      const int i1 = std::min(rows, i0 + kBlock);
      const int j1 = std::min(cols, j0 + kBlock);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j) dst[static_cast<std::size_t>(j) * rows + i] = src[static_cast<std::size_t>(i) * cols + j];
    }
}

namespace {

// Row r of the patch matrix starts at col + r * ld.
void im2col_ld(const ConvGeom& g, const double* image, double* col, std::size_t ld) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const std::size_t out_plane = ld;
  for (int c = 0; c < g.in_channels; ++c) {
    const double* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * out_plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= g.height) {
            std::fill_n(dst, ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          if (g.stride == 1) {
            for (int x = 0; x < ow; ++x) {
              const int ix = x - g.pad + kx;
              dst[x] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0;
            }
          } else {
            for (int x = 0; x < ow; ++x) {
              const int ix = x * g.stride - g.pad + kx;
              dst[x] = (ix >= 0 && ix < g.width) ? src[ix] : 0.0;
            }
          }
        }
      }
  }
}

void col2im_ld(const ConvGeom& g, const double* col, double* image, std::size_t ld) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const std::size_t out_plane = ld;
  std::fill_n(image, static_cast<std::size_t>(g.in_channels) * g.height * g.width, 0.0);
  for (int c = 0; c < g.in_channels; ++c) {
    double* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel; ++ky)
      for (int kx = 0; kx < g.kernel; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * out_plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[x];
          }
        }
      }
  }
}

// Output planes up to this size are processed as one batch-wide GEMM.
constexpr std::size_t kBatchedPlane = 64;

void conv2d_forward_batched(const ConvGeom& g, const double* x, const double* w, const double* bias, double* y) {
  const std::size_t plane = static_cast<std::size_t>(g.out_height()) * g.out_width();
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t nb = plane * g.batch;
  const int patch = static_cast<int>(g.patch_size());
  auto& col = scratch(0);
  col.resize(patch * nb);
  auto& tmp = scratch(1);
  tmp.resize(g.out_channels * nb);
  for (int n = 0; n < g.batch; ++n) im2col_ld(g, x + n * in_sample, col.data() + n * plane, nb);
  gemm_strided(g.out_channels, static_cast<int>(nb), patch, w, patch, 1, col.data(), tmp.data(), false);
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.out_channels; ++c) {
      const double* src = tmp.data() + c * nb + n * plane;
      double* dst = y + (static_cast<std::size_t>(n) * g.out_channels + c) * plane;
      const double b = bias ? bias[c] : 0.0;
      for (std::size_t l = 0; l < plane; ++l) dst[l] = src[l] + b;
    }
}

void conv2d_backward_batched(const ConvGeom& g, const double* x, const double* w, const double* dy, double* dx,
                             double* dw, double* db) {
  const std::size_t plane = static_cast<std::size_t>(g.out_height()) * g.out_width();
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * plane;
  const std::size_t nb = plane * g.batch;
  const int patch = static_cast<int>(g.patch_size());
  const int co = g.out_channels;
  auto& col = scratch(0);
  col.resize(patch * nb);
  if (dw) {
    // dy laid out as [N*plane, Co] so dw^T = col * dy_t.
    auto& dyt = scratch(1);
    dyt.resize(nb * co + static_cast<std::size_t>(patch) * co);
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < co; ++c)
        for (std::size_t l = 0; l < plane; ++l) dyt[(n * plane + l) * co + c] = dy[n * out_sample + c * plane + l];
    for (int n = 0; n < g.batch; ++n) im2col_ld(g, x + n * in_sample, col.data() + n * plane, nb);
    double* dwt = dyt.data() + nb * co;
    gemm_strided(patch, co, static_cast<int>(nb), col.data(), static_cast<std::ptrdiff_t>(nb), 1, dyt.data(), dwt,
                 false);
    for (int p = 0; p < patch; ++p)
      for (int c = 0; c < co; ++c) dw[static_cast<std::size_t>(c) * patch + p] += dwt[static_cast<std::size_t>(p) * co + c];
  }
  if (dx) {
    // dy laid out as [Co, N*plane]; col reused for the patch gradients.
    auto& dyc = scratch(2);
    dyc.resize(co * nb);
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < co; ++c)
        std::copy_n(dy + n * out_sample + c * plane, plane, dyc.data() + c * nb + n * plane);
    gemm_strided(patch, static_cast<int>(nb), co, w, 1, patch, dyc.data(), col.data(), false);
    for (int n = 0; n < g.batch; ++n) col2im_ld(g, col.data() + n * plane, dx + n * in_sample, nb);
  }
  if (db) {
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < co; ++c) {
        const double* p = dy + n * out_sample + c * plane;
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        db[c] += sum;
      }
  }
}

}  // namespace

void im2col(const ConvGeom& g, const double* image, double* col) {
  im2col_ld(g, image, col, static_cast<std::size_t>(g.out_height()) * g.out_width());
}

void col2im(const ConvGeom& g, const double* col, double* image) {
  col2im_ld(g, col, image, static_cast<std::size_t>(g.out_height()) * g.out_width());
}

void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias, double* y) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * out_plane;
  const int patch = static_cast<int>(g.patch_size());
  if (out_plane <= kBatchedPlane) return conv2d_forward_batched(g, x, w, bias, y);
#pragma omp parallel for schedule(static) if (g.batch > 1)
  for (int n = 0; n < g.batch; ++n) {
    auto& col = scratch(0);
    col.resize(g.patch_size() * out_plane);
    im2col(g, x + n * in_sample, col.data());
    double* yn = y + n * out_sample;
    if (bias) {
      for (int c = 0; c < g.out_channels; ++c) std::fill_n(yn + c * out_plane, out_plane, bias[c]);
    }
    gemm_strided(g.out_channels, static_cast<int>(out_plane), patch, w, patch, 1, col.data(), yn, bias != nullptr);
  }
}

void conv2d_backward(const ConvGeom& g, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * out_plane;
  const std::size_t wsize = static_cast<std::size_t>(g.out_channels) * g.patch_size();
  const int patch = static_cast<int>(g.patch_size());
  if (out_plane <= kBatchedPlane) return conv2d_backward_batched(g, x, w, dy, dx, dw, db);

  const bool use_flipped = dx && g.stride == 1 && g.pad <= g.kernel - 1 &&
                           g.out_height() == g.height && g.out_width() == g.width;
  ConvGeom back = g;
  std::vector<double> wflip;
  if (use_flipped) {
    back.in_channels = g.out_channels;
    back.out_channels = g.in_channels;
    back.pad = g.kernel - 1 - g.pad;
    const int kk = g.kernel;
    wflip.resize(wsize);
    for (int co = 0; co < g.out_channels; ++co)
      for (int ci = 0; ci < g.in_channels; ++ci)
        for (int ky = 0; ky < kk; ++ky)
          for (int kx = 0; kx < kk; ++kx)
            wflip[((static_cast<std::size_t>(ci) * g.out_channels + co) * kk + (kk - 1 - ky)) * kk + (kk - 1 - kx)] =
                w[((static_cast<std::size_t>(co) * g.in_channels + ci) * kk + ky) * kk + kx];
  }

  // Per-sample weight gradients are reduced afterwards in sample order.
  std::vector<double> dw_parts(dw ? wsize * g.batch : 0);

#pragma omp parallel for schedule(static) if (g.batch > 1)
  for (int n = 0; n < g.batch; ++n) {
    const double* dyn = dy + n * out_sample;
    auto& col = scratch(0);
    col.resize(g.patch_size() * out_plane);
    if (dw) {
      im2col(g, x + n * in_sample, col.data());
      // dw^T = col * dy^T; only the small dy plane set is transposed.
      auto& dyt = scratch(2);
      dyt.resize(out_sample + wsize);
      transpose(g.out_channels, static_cast<int>(out_plane), dyn, dyt.data());
      double* dwt = dyt.data() + out_sample;
      gemm_strided(patch, g.out_channels, static_cast<int>(out_plane), col.data(),
                   static_cast<std::ptrdiff_t>(out_plane), 1, dyt.data(), dwt, false);
      transpose(patch, g.out_channels, dwt, dw_parts.data() + n * wsize);
    }
    if (dx && use_flipped) {
      // Stride 1: dx is the full correlation of dy with the flipped kernel.
      auto& dcol = scratch(1);
      dcol.resize(back.patch_size() * in_sample / g.in_channels);
      im2col(back, dyn, dcol.data());
      gemm_strided(g.in_channels, static_cast<int>(in_sample / g.in_channels), static_cast<int>(back.patch_size()),
                   wflip.data(), static_cast<std::ptrdiff_t>(back.patch_size()), 1, dcol.data(), dx + n * in_sample,
                   false);
    } else if (dx) {
      gemm_strided(patch, static_cast<int>(out_plane), g.out_channels, w, 1, patch, dyn, col.data(), false);
      col2im(g, col.data(), dx + n * in_sample);
    }
  }
  if (dw) {
    for (int n = 0; n < g.batch; ++n) {
      const double* part = dw_parts.data() + n * wsize;
      for (std::size_t i = 0; i < wsize; ++i) dw[i] += part[i];
    }
  }
  if (db) {
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < g.out_channels; ++c) {
        const double* p = dy + n * out_sample + c * out_plane;
        double s = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) s += p[i];
        db[c] += s;
      }
  }
}

void plane_stats(int planes, std::size_t plane_size, const double* x, double* mean, double* stdev) {
#pragma omp parallel for schedule(static) if (planes * plane_size > 32768)
  for (int p = 0; p < planes; ++p) {
    const double* v = x + p * plane_size;
    double s = 0.0;
    for (std::size_t i = 0; i < plane_size; ++i) s += v[i];
    const double mu = s / static_cast<double>(plane_size);
    double q = 0.0;
    for (std::size_t i = 0; i < plane_size; ++i) q += (v[i] - mu) * (v[i] - mu);
    mean[p] = mu;
    stdev[p] = std::sqrt(q / static_cast<double>(plane_size));
  }
}

namespace serial {

void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias, double* y) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double s = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                s += w[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx] *
                     x[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.height + iy) * g.width + ix];
              }
          y[((static_cast<std::size_t>(n) * g.out_channels + co) * oh + oy) * ow + ox] = s;
        }
}

void conv2d_backward(const ConvGeom& g, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  if (dx) std::fill_n(dx, static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, 0.0);
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double gy = dy[((static_cast<std::size_t>(n) * g.out_channels + co) * oh + oy) * ow + ox];
          if (db) db[co] += gy;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                const std::size_t wi = ((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx;
                const std::size_t xi = ((static_cast<std::size_t>(n) * g.in_channels + ci) * g.height + iy) * g.width + ix;
                if (dw) dw[wi] += gy * x[xi];
                if (dx) dx[xi] += gy * w[wi];
              }
        }
}

void plane_stats(int planes, std::size_t plane_size, const double* x, double* mean, double* stdev) {
  for (int p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane_size; ++i) s += x[p * plane_size + i];
    mean[p] = s / static_cast<double>(plane_size);
    double q = 0.0;
    for (std::size_t i = 0; i < plane_size; ++i) {
      const double d = x[p * plane_size + i] - mean[p];
      q += d * d;
    }
    stdev[p] = std::sqrt(q / static_cast<double>(plane_size));
  }
}

}  // namespace serial

}  // namespace fbc::kernels
