#pragma once

#include <string>
#include <vector>

#include "fbcgan/autograd.hpp"
#include "fbcgan/core.hpp"

namespace fbc::nn {

struct NamedParam {
  std::string name;
  Var var;
};

/// Ordered, named view over parameters. Names are stable across runs and
/// double as checkpoint keys.
using ParamList = std::vector<NamedParam>;

void append(ParamList& dst, const std::string& prefix, const ParamList& src);
void set_trainable(const ParamList& params, bool on);
void zero_grads(const ParamList& params);
/// Deep copy of parameter values into fresh leaf nodes.
Var clone_param(const Var& v);

/// Leaky-ReLU slope used throughout the networks.
inline constexpr double kLeak = 0.2;

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, double gain = 1.0);
  Var operator()(const Var& x) const;
  ParamList parameters() const { return {{"weight", weight_}, {"bias", bias_}}; }
  Linear clone() const;

 private:
  Var weight_, bias_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng, double gain = 1.0);
  Var operator()(const Var& x) const;
  ParamList parameters() const { return {{"weight", weight_}, {"bias", bias_}}; }
  Conv2d clone() const;
  int in_channels() const { return weight_.dim(1); }
  int out_channels() const { return weight_.dim(0); }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_, bias_;
  int stride_ = 1, pad_ = 1;
};

/// Per-channel scale/shift after a parameter-free normalisation.
class ChannelAffine {
 public:
  ChannelAffine() = default;
  explicit ChannelAffine(int channels);
  Var operator()(const Var& x) const;
  ParamList parameters() const { return {{"gamma", gamma_}, {"beta", beta_}}; }
  ChannelAffine clone() const;

 private:
  Var gamma_, beta_;
};

}  // namespace fbc::nn
