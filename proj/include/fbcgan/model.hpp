#pragma once

#include "fbcgan/background_modifier.hpp"
#include "fbcgan/config.hpp"
#include "fbcgan/generators.hpp"

namespace fbc {

/// Everything needed to synthesise an image: the four generator modules.
struct Model {
  GeneratorParams generators;
  BackgroundModifier modifier;

  static Model create(const RunConfig& cfg, Rng& rng) {
    Model m;
    m.generators = GeneratorParams::create(cfg, rng);
    m.modifier = BackgroundModifier(cfg, rng);
    return m;
  }
  /// Generator-side parameters; BG-Mod entries are prefixed "gb3".
  nn::ParamList parameters() const {
    nn::ParamList out = generators.parameters();
    nn::append(out, "gb3", modifier.parameters());
    return out;
  }
  Model clone() const { return {generators.clone(), modifier.clone()}; }
};

}  // namespace fbc
