#pragma once

#include <cstddef>

namespace fbc::kernels {

/// Geometry of a 2-D convolution over an NCHW batch with square kernels.
struct ConvGeom {
  int batch = 1;
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t patch_size() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

// Parallel kernels. Work is split over independent outputs only, so every
// result is bit-identical for any thread count.

/// C[MxN] = A[MxK] * B[KxN] (+ C when accumulate). Row-major, dense.
void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
/// C[MxN] = A^T * B with A stored as [KxM].
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
/// C[MxN] = A * B^T with B stored as [NxK].
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);

void transpose(int rows, int cols, const double* src, double* dst);

void im2col(const ConvGeom& g, const double* image, double* col);
void col2im(const ConvGeom& g, const double* col, double* image);

/// y[N,Co,OH,OW] = conv(x, w[Co,Ci,k,k]) + bias[Co]; bias may be null.
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias, double* y);
/// Accumulates into dw/db; overwrites dx. Any of dx/dw/db may be null.
void conv2d_backward(const ConvGeom& g, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db);

/// Population mean/std over each of `planes` contiguous planes of `plane_size` values.
void plane_stats(int planes, std::size_t plane_size, const double* x, double* mean, double* stdev);

/// Number of threads the parallel kernels will use.
int max_threads();

namespace serial {

// Straightforward reference versions kept for testing the parallel kernels.

void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias, double* y);
void conv2d_backward(const ConvGeom& g, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db);
void plane_stats(int planes, std::size_t plane_size, const double* x, double* mean, double* stdev);

}  // namespace serial

}  // namespace fbc::kernels
