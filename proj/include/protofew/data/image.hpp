#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "protofew/num/tensor.hpp"

namespace protofew::data {

/// Planar RGB image, values in [0,1], layout [3][height][width].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(3 * w * h, 0.f) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct Normalization {
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> std{0.5f, 0.5f, 0.5f};

  static Normalization identity() { return {{0.f, 0.f, 0.f}, {1.f, 1.f, 1.f}}; }
};

/// Decodes PNG or JPEG (by signature) to 3-channel. Grayscale and alpha are
/// folded into RGB.
Image decode_image(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centers; the identity when the size
/// already matches.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);

/// [3,R,R] tensor: bilinear resize to R x R then (x - mean) / std per channel.
num::Tensor<float> preprocess(const Image& image, std::size_t resolution,
                              const Normalization& normalization);

/// Inverse of the normalization step for an already-sized [3,R,R] tensor.
Image tensor_to_image(const num::Tensor<float>& chw, const Normalization& normalization);

}  // namespace protofew::data
