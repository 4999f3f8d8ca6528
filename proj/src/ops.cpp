#include "fbcgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbcgan/error.hpp"
#include "fbcgan/kernels.hpp"

namespace fbc::ag {

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank4(const Var& x, const char* op) {
  if (x.value().rank() != 4) throw InvalidArgument(std::string(op) + ": expected NCHW tensor, got " + shape_str(x.shape()));
}

// Applies f elementwise; df(x, y) gives dy/dx from input and output.
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  Tensor out(x.shape());
  const double* in = x.value().data();
  double* o = out.data();
  const std::size_t n = out.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) o[i] = f(in[i]);
  return make_result(std::move(out), {x}, [df](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    const double* gy = self.grad.data();
    const double* xv = p.value.data();
    const double* yv = self.value.data();
    const std::size_t n = self.value.numel();
    for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] * df(xv[i], yv[i]);
  });
}

double clamp_prob(double p, double c) { return std::clamp(p, c, 1.0 - c); }

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      double* g = p->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      double* g = p.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      double* g = pa.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      double* g = pb.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var mul_map(const Var& x, const Var& m) {
  require_rank4(x, "mul_map");
  require_rank4(m, "mul_map");
  if (m.dim(1) != 1 || m.dim(0) != x.dim(0) || m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3))
    throw InvalidArgument("mul_map: map " + shape_str(m.shape()) + " does not match " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out(x.shape());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double* xv = x.value().data() + (static_cast<std::size_t>(b) * c + ch) * plane;
      const double* mv = m.value().data() + b * plane;
      double* o = out.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] = xv[i] * mv[i];
    }
  return make_result(std::move(out), {x, m}, [n, c, plane](Node& self) {
    auto& px = *self.parents[0];
    auto& pm = *self.parents[1];
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
        const double* gy = self.grad.data() + off;
        if (px.requires_grad) {
          double* g = px.grad_buffer().data() + off;
          const double* mv = pm.value.data() + b * plane;
          for (std::size_t i = 0; i < plane; ++i) g[i] += gy[i] * mv[i];
        }
        if (pm.requires_grad) {
          double* g = pm.grad_buffer().data() + b * plane;
          const double* xv = px.value.data() + off;
          for (std::size_t i = 0; i < plane; ++i) g[i] += gy[i] * xv[i];
        }
      }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var one_minus(const Var& a) {
  return unary(a, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: nothing to concatenate");
  const Shape& s0 = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    require_rank4(p, "concat_channels");
    if (p.dim(0) != s0[0] || p.dim(2) != s0[2] || p.dim(3) != s0[3])
      throw InvalidArgument("concat_channels: incompatible " + shape_str(p.shape()) + " vs " + shape_str(s0));
    channels += p.dim(1);
  }
  const int n = s0[0];
  const std::size_t plane = static_cast<std::size_t>(s0[2]) * s0[3];
  Tensor out({n, channels, s0[2], s0[3]});
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int c = p.dim(1);
    for (int b = 0; b < n; ++b)
      std::copy_n(p.value().data() + static_cast<std::size_t>(b) * c * plane, c * plane,
                  out.data() + (static_cast<std::size_t>(b) * channels + off) * plane);
    off += c;
  }
  return make_result(std::move(out), parts, [n, channels, plane, offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const int c = p.value.dim(1);
      double* g = p.grad_buffer().data();
      for (int b = 0; b < n; ++b) {
        const double* src = self.grad.data() + (static_cast<std::size_t>(b) * channels + offsets[k]) * plane;
        double* dst = g + static_cast<std::size_t>(b) * c * plane;
        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice_channels(const Var& x, int begin, int end) {
  require_rank4(x, "slice_channels");
  const int n = x.dim(0), c = x.dim(1);
  if (begin < 0 || end > c || begin >= end) throw InvalidArgument("slice_channels: bad channel range");
  const int cs = end - begin;
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out({n, cs, x.dim(2), x.dim(3)});
  for (int b = 0; b < n; ++b)
    std::copy_n(x.value().data() + (static_cast<std::size_t>(b) * c + begin) * plane, cs * plane,
                out.data() + static_cast<std::size_t>(b) * cs * plane);
  return make_result(std::move(out), {x}, [n, c, cs, begin, plane](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    for (int b = 0; b < n; ++b) {
      const double* src = self.grad.data() + static_cast<std::size_t>(b) * cs * plane;
      double* dst = g + (static_cast<std::size_t>(b) * c + begin) * plane;
      for (std::size_t i = 0; i < cs * plane; ++i) dst[i] += src[i];
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.value().rank() != 2 || weight.value().rank() != 2 || x.dim(1) != weight.dim(1))
    throw InvalidArgument("linear: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(weight.shape()));
  const int n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(out_f)) throw InvalidArgument("linear: bias size");
  Tensor out({n, out_f});
  kernels::gemm_nt(n, out_f, in, x.value().data(), weight.value().data(), out.data(), false);
  if (bias.defined())
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < out_f; ++o) out[static_cast<std::size_t>(b) * out_f + o] += bias.value()[o];
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [n, in, out_f](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) kernels::gemm(n, in, out_f, self.grad.data(), pw.value.data(), px.grad_buffer().data(), true);
    if (pw.requires_grad) kernels::gemm_tn(out_f, in, n, self.grad.data(), px.value.data(), pw.grad_buffer().data(), true);
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      double* g = self.parents[2]->grad_buffer().data();
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_f; ++o) g[o] += self.grad[static_cast<std::size_t>(b) * out_f + o];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank4(x, "conv2d");
  if (weight.value().rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != weight.dim(3))
    throw InvalidArgument("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " + shape_str(x.shape()));
  kernels::ConvGeom g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(g.out_channels)) throw InvalidArgument("conv2d: bias size");
  Tensor out({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, x.value().data(), weight.value().data(), bias.defined() ? bias.value().data() : nullptr,
                          out.data());
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [g](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    double* db = (self.parents.size() > 2 && self.parents[2]->requires_grad) ? self.parents[2]->grad_buffer().data() : nullptr;
    double* dw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    if (px.requires_grad) {
      Tensor dx(px.value.shape());
      kernels::conv2d_backward(g, px.value.data(), pw.value.data(), self.grad.data(), dx.data(), dw, db);
      double* gx = px.grad_buffer().data();
      for (std::size_t i = 0; i < dx.numel(); ++i) gx[i] += dx[i];
    } else {
      kernels::conv2d_backward(g, px.value.data(), pw.value.data(), self.grad.data(), nullptr, dw, db);
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank4(x, "upsample_nearest2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const int planes = n * c;
  for (int p = 0; p < planes; ++p) {
    const double* src = x.value().data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return make_result(std::move(out), {x}, [planes, h, w](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    for (int q = 0; q < planes; ++q) {
      const double* src = self.grad.data() + static_cast<std::size_t>(q) * 4 * h * w;
      double* dst = g + static_cast<std::size_t>(q) * h * w;
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
    }
  });
}

Var translate(const Var& x, const std::vector<int>& dx, const std::vector<int>& dy) {
  require_rank4(x, "translate");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (static_cast<int>(dx.size()) != n || static_cast<int>(dy.size()) != n)
    throw InvalidArgument("translate: one offset pair per sample required");
  // Source index per output element, -1 when it falls outside.
  std::vector<std::ptrdiff_t> src(x.value().numel(), -1);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t plane = (static_cast<std::size_t>(b) * c + ch) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const int sy = y - dy[b], sx = xx - dx[b];
          if (sy >= 0 && sy < h && sx >= 0 && sx < w)
            src[plane + y * w + xx] = static_cast<std::ptrdiff_t>(plane + sy * w + sx);
        }
    }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < src.size(); ++i)
    if (src[i] >= 0) out[i] = x.value()[src[i]];
  return make_result(std::move(out), {x}, [src = std::move(src)](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    for (std::size_t i = 0; i < src.size(); ++i)
      if (src[i] >= 0) g[src[i]] += self.grad[i];
  });
}

Var avg_pool(const Var& x, int k) {
  require_rank4(x, "avg_pool");
  if (k == 1) return x;
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k < 1 || h % k != 0 || w % k != 0) throw InvalidArgument("avg_pool: size not divisible by pool factor");
  const int oh = h / k, ow = w / k;
  const double inv = 1.0 / (k * k);
  Tensor out({n, c, oh, ow});
  const int planes = n * c;
  for (int p = 0; p < planes; ++p) {
    const double* src = x.value().data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) dst[(y / k) * ow + xx / k] += src[y * w + xx] * inv;
  }
  return make_result(std::move(out), {x}, [planes, h, w, k, ow, oh, inv](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    for (int q = 0; q < planes; ++q) {
      const double* src = self.grad.data() + static_cast<std::size_t>(q) * oh * ow;
      double* dst = g + static_cast<std::size_t>(q) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) dst[y * w + xx] += src[(y / k) * ow + xx / k] * inv;
    }
  });
}

Var leaky_relu(const Var& x, double slope) {
  if (slope < 0.0 || slope > 1.0) throw InvalidArgument("leaky_relu: slope must lie in [0, 1]");
  // Branch-free forms; valid because 0 <= slope <= 1.
  return unary(
      x, [slope](double v) { return std::max(v, slope * v); },
      [slope](double v, double) { return slope + (1.0 - slope) * static_cast<double>(v > 0); });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var instance_norm(const Var& x, double eps) {
  require_rank4(x, "instance_norm");
  const int planes = x.dim(0) * x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<double> mu(planes), sd(planes);
  kernels::plane_stats(planes, plane, x.value().data(), mu.data(), sd.data());
  std::vector<double> inv(planes);
  for (int p = 0; p < planes; ++p) inv[p] = 1.0 / std::sqrt(sd[p] * sd[p] + eps);
  Tensor out(x.shape());
  for (int p = 0; p < planes; ++p) {
    const double* v = x.value().data() + p * plane;
    double* o = out.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) o[i] = (v[i] - mu[p]) * inv[p];
  }
  return make_result(std::move(out), {x}, [planes, plane, inv](Node& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    double* g = px.grad_buffer().data();
    const double n = static_cast<double>(plane);
    for (int p = 0; p < planes; ++p) {
      const double* gy = self.grad.data() + p * plane;
      const double* xh = self.value.data() + p * plane;
      double sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        sg += gy[i];
        sgx += gy[i] * xh[i];
      }
      const double mg = sg / n, mgx = sgx / n;
      double* gp = g + p * plane;
      for (std::size_t i = 0; i < plane; ++i) gp[i] += inv[p] * (gy[i] - mg - xh[i] * mgx);
    }
  });
}

Var affine_channels(const Var& x, const Var& gamma, const Var& beta) {
  require_rank4(x, "affine_channels");
  const int n = x.dim(0), c = x.dim(1);
  if (gamma.numel() != static_cast<std::size_t>(c) || beta.numel() != static_cast<std::size_t>(c))
    throw InvalidArgument("affine_channels: parameter size must equal channel count");
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out(x.shape());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const double gm = gamma.value()[ch], bt = beta.value()[ch];
      for (std::size_t i = 0; i < plane; ++i) out[off + i] = x.value()[off + i] * gm + bt;
    }
  return make_result(std::move(out), {x, gamma, beta}, [n, c, plane](Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
        double sg = 0.0, sgx = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          sg += self.grad[off + i];
          sgx += self.grad[off + i] * px.value[off + i];
        }
        if (px.requires_grad) {
          double* g = px.grad_buffer().data() + off;
          const double gm = pg.value[ch];
          for (std::size_t i = 0; i < plane; ++i) g[i] += self.grad[off + i] * gm;
        }
        if (pg.requires_grad) pg.grad_buffer()[ch] += sgx;
        if (pb.requires_grad) pb.grad_buffer()[ch] += sg;
      }
  });
}

Var bounded_residual(const Var& base, const Var& t) {
  require_same(base, t, "bounded_residual");
  Tensor out(base.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double b = base.value()[i];
    out[i] = b + (1.0 - std::abs(b)) * t.value()[i];
  }
  return make_result(std::move(out), {base, t}, [](Node& self) {
    auto& pb = *self.parents[0];
    auto& pt = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const double b = pb.value[i];
      const double sgn = b > 0 ? 1.0 : (b < 0 ? -1.0 : 0.0);
      if (pb.requires_grad) pb.grad_buffer()[i] += self.grad[i] * (1.0 - sgn * pt.value[i]);
      if (pt.requires_grad) pt.grad_buffer()[i] += self.grad[i] * (1.0 - std::abs(b));
    }
  });
}

Var batch_mean(const Var& x) {
  require_rank4(x, "batch_mean");
  const int n = x.dim(0);
  const std::size_t per = x.numel() / n;
  Tensor out({1, x.dim(1), x.dim(2), x.dim(3)});
  for (int b = 0; b < n; ++b)
    for (std::size_t i = 0; i < per; ++i) out[i] += x.value()[b * per + i];
  for (std::size_t i = 0; i < per; ++i) out[i] /= n;
  return make_result(std::move(out), {x}, [n, per](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    for (int b = 0; b < n; ++b)
      for (std::size_t i = 0; i < per; ++i) g[b * per + i] += self.grad[i] / n;
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor({1}, s), {x}, [](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double gy = self.grad[0];
    for (double& g : p.grad_buffer().values()) g += gy;
  });
}

Var mean(const Var& x) {
  if (x.numel() == 0) throw InvalidArgument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Var mse(const Var& a, const Var& b) {
  require_same(a, b, "mse");
  const std::size_t n = a.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return make_result(Tensor({1}, s / static_cast<double>(n)), {a, b}, [n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double k = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pa.value[i] - pb.value[i];
      if (pa.requires_grad) pa.grad_buffer()[i] += k * d;
      if (pb.requires_grad) pb.grad_buffer()[i] -= k * d;
    }
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same(a, b, "mean_abs_diff");
  const std::size_t n = a.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor({1}, s / static_cast<double>(n)), {a, b}, [n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double k = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pa.value[i] - pb.value[i];
      const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      if (pa.requires_grad) pa.grad_buffer()[i] += k * sgn;
      if (pb.requires_grad) pb.grad_buffer()[i] -= k * sgn;
    }
  });
}

namespace {

// sum_i w_i * -log(q(p_i)) / sum_i w_i, q(p) = clamp(p) or 1 - clamp(p).
Var weighted_log_term(const Var& p, const Tensor* weights, double clamp, bool complement) {
  const std::size_t n = p.numel();
  if (n == 0) throw InvalidArgument("log loss over an empty batch");
  if (weights && weights->numel() != n) throw InvalidArgument("log loss: weight count mismatch");
  double wsum = 0.0, s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    const double q = clamp_prob(p.value()[i], clamp);
    s += w * -std::log(complement ? 1.0 - q : q);
    wsum += w;
  }
  if (wsum <= 0.0) throw InvalidArgument("log loss: weights sum to zero");
  Tensor w_copy = weights ? *weights : Tensor(p.shape(), 1.0);
  return make_result(Tensor({1}, s / wsum), {p}, [w = std::move(w_copy), wsum, complement](Node& self) {
    auto& pp = *self.parents[0];
    if (!pp.requires_grad) return;
    const double gy = self.grad[0] / wsum;
    double* g = pp.grad_buffer().data();
    // The clamp guards the value only. Its gradient is that of the plain log,
    // so a saturated discriminator still sends the generator a signal; after
    // the sigmoid's p(1-p) factor this is the usual bounded logit gradient.
    constexpr double tiny = std::numeric_limits<double>::min();
    for (std::size_t i = 0; i < pp.value.numel(); ++i) {
      const double v = pp.value[i];
      g[i] += gy * w[i] * (complement ? 1.0 / std::max(1.0 - v, tiny) : -1.0 / std::max(v, tiny));
    }
  });
}

}  // namespace

Var mean_neg_log(const Var& p, double clamp) { return weighted_log_term(p, nullptr, clamp, false); }
Var mean_neg_log1m(const Var& p, double clamp) { return weighted_log_term(p, nullptr, clamp, true); }
Var weighted_neg_log(const Var& p, const Tensor& weights, double clamp) {
  return weighted_log_term(p, &weights, clamp, false);
}
Var weighted_neg_log1m(const Var& p, const Tensor& weights, double clamp) {
  return weighted_log_term(p, &weights, clamp, true);
}

}  // namespace fbc::ag
