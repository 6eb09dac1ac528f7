#pragma once

#include <cstdint>

#include "protofew/data/dataset.hpp"

namespace protofew::data {

/// Rendering knobs for the synthetic fixture. Class identity lives in the
/// hues and the layout of two shapes; every image re-draws position, scale,
/// brightness, contrast, a distractor blob and pixel noise.
struct SynthStyle {
  // 0: saturated shapes on dark backgrounds. 1: muted shapes on light
  // backgrounds with a narrowed hue range. 2: near-grayscale, shapes either
  // much darker or much lighter than the background.
  int palette = 0;
  double position_jitter = 0.10;  // fraction of the resolution
  double scale_jitter = 0.15;
  double brightness_jitter = 0.25;  // additive shift of up to half this
  double contrast_jitter = 0.35;
  double pixel_noise = 0.06;
  double background_jitter = 0.1;  // per-image hue shift of the background
  bool distractor = true;
};

/// Classes are named `synth_000`, `synth_001`, ...; `first_class` offsets the
/// pattern index so disjoint class ranges can be drawn from one seed.
ImageDataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::size_t resolution,
                           std::uint64_t seed, const SynthStyle& style = {},
                           std::size_t first_class = 0);

}  // namespace protofew::data
