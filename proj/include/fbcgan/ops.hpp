#pragma once

#include <vector>

#include "fbcgan/autograd.hpp"

/// Differentiable tensor operations. Rank-4 inputs are NCHW batches.
namespace fbc::ag {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x[N,C,H,W] * m[N,1,H,W], the map broadcast over channels.
Var mul_map(const Var& x, const Var& m);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);

Var reshape(const Var& x, Shape shape);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& x, int begin, int end);

/// x[N,in] W[out,in]^T + b[out]
Var linear(const Var& x, const Var& weight, const Var& bias);
/// weight [Co,Ci,k,k]; bias [Co] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var upsample_nearest2x(const Var& x);
/// Per-sample integer shift of [N,C,H,W]: out(y, x) = in(y - dy[n], x - dx[n]),
/// zero where the source falls outside.
Var translate(const Var& x, const std::vector<int>& dx, const std::vector<int>& dy);
/// Non-overlapping k x k average pooling.
Var avg_pool(const Var& x, int k);

Var leaky_relu(const Var& x, double slope);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

/// Per-sample, per-channel normalisation to zero mean / unit variance.
Var instance_norm(const Var& x, double eps);
/// x * gamma[c] + beta[c] with per-channel parameters of shape [C].
Var affine_channels(const Var& x, const Var& gamma, const Var& beta);
/// base + (1 - |base|) * t. Keeps the result inside [-1, 1] when base and t are.
Var bounded_residual(const Var& base, const Var& t);

/// Mean over the batch axis, keeping it as size 1.
Var batch_mean(const Var& x);

Var mean(const Var& x);
Var sum(const Var& x);
/// mean((a - b)^2)
Var mse(const Var& a, const Var& b);
/// mean(|a - b|)
Var mean_abs_diff(const Var& a, const Var& b);

/// mean(-log(clamp(p))) with p clamped to [clamp, 1 - clamp]. The clamp bounds
/// the value only; gradients are those of the unclamped log.
Var mean_neg_log(const Var& p, double clamp);
/// mean(-log(1 - clamp(p)))
Var mean_neg_log1m(const Var& p, double clamp);
/// sum_i w_i * (-log clamp(p_i)) / sum_i w_i; w is a constant weight tensor.
Var weighted_neg_log(const Var& p, const Tensor& weights, double clamp);
Var weighted_neg_log1m(const Var& p, const Tensor& weights, double clamp);

}  // namespace fbc::ag
