#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "protofew/data/image.hpp"

namespace protofew::ssl {

struct AugmentConfig {
  double min_area = 0.3;  // crop area as a fraction of the image
  double max_area = 1.0;
  double min_ratio = 3.0 / 4.0;  // crop width / height
  double max_ratio = 4.0 / 3.0;
  double flip_prob = 0.5;
  double brightness = 0.4;  // factors drawn from [1 - s, 1 + s]
  double contrast = 0.4;
  double saturation = 0.4;

  /// Every transform disabled: views equal the input.
  static AugmentConfig none() { return {1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0}; }
};

struct CropBox {
  std::size_t x0 = 0, y0 = 0, width = 0, height = 0;
};

/// Random-resized-crop box; falls back to the full image after 10 rejected
/// draws.
CropBox sample_crop(std::size_t width, std::size_t height, const AugmentConfig& config,
                    std::mt19937_64& rng);

/// Crop (resized back to the input size), flip, brightness, contrast,
/// saturation, in that order, on a [0,1] image.
data::Image augment_image(const data::Image& image, const AugmentConfig& config,
                          std::mt19937_64& rng);

struct ViewPair {
  num::Tensor<float> x_a;  // [B,3,R,R]
  num::Tensor<float> x_b;
  std::vector<std::size_t> provenance;  // source image id per row
};

/// Two independent augmentations of each image, normalized. Row i of the
/// two views uses streams derived from (batch_seed, i), so the result does
/// not depend on how rows are scheduled.
ViewPair augment_pair(std::span<const data::Image> images, std::span<const std::size_t> provenance,
                      const AugmentConfig& config, const data::Normalization& normalization,
                      std::uint64_t batch_seed);

}  // namespace protofew::ssl
