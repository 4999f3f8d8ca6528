#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "fbcgan/autograd.hpp"
#include "fbcgan/core.hpp"
#include "fbcgan/ops.hpp"

namespace fbc::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

/// Uniform in [lo,hi] but never within `gap` of any of `kinks`, so a finite
/// difference step never straddles a non-smooth point.
inline Tensor away_from(const Shape& shape, Rng& rng, double lo, double hi, std::vector<double> kinks, double gap = 1e-2) {
  Tensor t(shape);
  for (auto& v : t.values()) {
    do v = lo + (hi - lo) * rng.uniform();
    while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < gap; }));
  }
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Five-point central difference of g at 0; truncation error is O(h^4), so a
/// comparatively large step keeps rounding noise small.
inline double five_point(const std::function<double(double)>& g, double h) {
  return (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h);
}

/// Largest relative error between the analytic gradient of scalar f at x and
/// finite differences, over `probes` random coordinates.
inline double max_grad_error(const std::function<Var(const Var&)>& f, const Tensor& x, int probes, std::uint64_t seed,
                             double h = 1e-4) {
  Var xv(x, true);
  backward(f(xv));
  const Tensor analytic = xv.grad();
  Rng rng(seed);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const int i = rng.uniform_int(static_cast<int>(x.numel()));
    const double numeric = five_point(
        [&](double d) {
          Tensor xd = x;
          xd[i] += d;
          NoGradGuard guard;
          return f(Var(xd)).item();
        },
        h);
    worst = std::max(worst, rel_err(analytic[i], numeric, 1e-8));
  }
  return worst;
}

/// Reduces a tensor-valued op to a scalar with fixed random weights so every
/// output element contributes a distinct amount to the gradient.
inline std::function<Var(const Var&)> weighted(std::function<Var(const Var&)> op, const Shape& out_shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = random_tensor(out_shape, rng);
  return [op, w](const Var& x) { return ag::sum(ag::mul(op(x), Var(w))); };
}

}  // namespace fbc::testing
