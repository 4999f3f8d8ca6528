#include "fbcgan/nn.hpp"

#include <cmath>

#include "fbcgan/ops.hpp"

namespace fbc::nn {

namespace {

// He-style init for leaky-ReLU layers, scaled by `gain`.
Tensor init_weight(Shape shape, int fan_in, Rng& rng, double gain) {
  Tensor w(std::move(shape));
  const double sd = gain * std::sqrt(2.0 / ((1.0 + kLeak * kLeak) * fan_in));
  for (double& v : w.values()) v = sd * rng.normal();
  return w;
}

}  // namespace

void append(ParamList& dst, const std::string& prefix, const ParamList& src) {
  for (const auto& p : src) dst.push_back({prefix + "." + p.name, p.var});
}

void set_trainable(const ParamList& params, bool on) {
  for (const auto& p : params) {
    Var v = p.var;
    v.set_requires_grad(on);
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    Var v = p.var;
    v.zero_grad();
  }
}

Var clone_param(const Var& v) { return Var(v.value(), v.requires_grad()); }

Linear::Linear(int in, int out, Rng& rng, double gain)
    : weight_(init_weight({out, in}, in, rng, gain), true), bias_(Tensor({out}), true) {}

Var Linear::operator()(const Var& x) const { return ag::linear(x, weight_, bias_); }

Linear Linear::clone() const {
  Linear l;
  l.weight_ = clone_param(weight_);
  l.bias_ = clone_param(bias_);
  return l;
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng, double gain)
    : weight_(init_weight({out, in, kernel, kernel}, in * kernel * kernel, rng, gain), true),
      bias_(Tensor({out}), true),
      stride_(stride),
      pad_(pad) {}

Var Conv2d::operator()(const Var& x) const { return ag::conv2d(x, weight_, bias_, stride_, pad_); }

Conv2d Conv2d::clone() const {
  Conv2d c = *this;
  c.weight_ = clone_param(weight_);
  c.bias_ = clone_param(bias_);
  return c;
}

ChannelAffine::ChannelAffine(int channels) : gamma_(Tensor({channels}, 1.0), true), beta_(Tensor({channels}), true) {}

Var ChannelAffine::operator()(const Var& x) const { return ag::affine_channels(x, gamma_, beta_); }

ChannelAffine ChannelAffine::clone() const {
  ChannelAffine a;
  a.gamma_ = clone_param(gamma_);
  a.beta_ = clone_param(beta_);
  return a;
}

}  // namespace fbc::nn
