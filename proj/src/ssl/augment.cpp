#include "protofew/ssl/augment.hpp"

#include <algorithm>
#include <cmath>

#include "protofew/errors.hpp"
#include "protofew/seed.hpp"

namespace protofew::ssl {

using data::Image;

CropBox sample_crop(std::size_t width, std::size_t height, const AugmentConfig& config,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double area = static_cast<double>(width * height);
  const double log_lo = std::log(config.min_ratio), log_hi = std::log(config.max_ratio);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * (config.min_area + (config.max_area - config.min_area) * u(rng));
    const double ratio = std::exp(log_lo + (log_hi - log_lo) * u(rng));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
    if (w == 0 || h == 0 || w > width || h > height) continue;
    CropBox box{0, 0, w, h};
    box.x0 = std::uniform_int_distribution<std::size_t>(0, width - w)(rng);
    box.y0 = std::uniform_int_distribution<std::size_t>(0, height - h)(rng);
    return box;
  }
  return {0, 0, width, height};
}

namespace {

float luma(const Image& img, std::size_t y, std::size_t x) {
  return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
}

double draw_factor(double strength, std::mt19937_64& rng) {
  if (strength <= 0) return 1.0;
  return std::uniform_real_distribution<double>(std::max(0.0, 1 - strength), 1 + strength)(rng);
}

}  // namespace

Image augment_image(const Image& image, const AugmentConfig& config, std::mt19937_64& rng) {
  const CropBox box = sample_crop(image.width, image.height, config, rng);
  Image out = image;
  if (box.width != image.width || box.height != image.height) {
    Image crop(box.width, box.height);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < box.height; ++y) {
        for (std::size_t x = 0; x < box.width; ++x) {
          crop.at(c, y, x) = image.at(c, box.y0 + y, box.x0 + x);
        }
      }
    }
    out = data::resize_bilinear(crop, image.width, image.height);
  }
  if (config.flip_prob > 0 && std::uniform_real_distribution<double>(0, 1)(rng) < config.flip_prob) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width / 2; ++x) {
          std::swap(out.at(c, y, x), out.at(c, y, out.width - 1 - x));
        }
      }
    }
  }
  const double b = draw_factor(config.brightness, rng);
  const double k = draw_factor(config.contrast, rng);
  const double s = draw_factor(config.saturation, rng);
  if (b != 1.0) {
    for (auto& v : out.pixels) v = std::clamp(static_cast<float>(v * b), 0.f, 1.f);
  }
  if (k != 1.0) {
    double mean = 0;
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) mean += luma(out, y, x);
    }
    mean /= static_cast<double>(out.width * out.height);
    for (auto& v : out.pixels) v = std::clamp(static_cast<float>((v - mean) * k + mean), 0.f, 1.f);
  }
  if (s != 1.0) {
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        const float g = luma(out, y, x);
        for (std::size_t c = 0; c < 3; ++c) {
          float& v = out.at(c, y, x);
          v = std::clamp(static_cast<float>((v - g) * s + g), 0.f, 1.f);
        }
      }
    }
  }
  return out;
}

ViewPair augment_pair(std::span<const Image> images, std::span<const std::size_t> provenance,
                      const AugmentConfig& config, const data::Normalization& normalization,
                      std::uint64_t batch_seed) {
  if (images.empty()) throw ContractViolation("augment_pair: empty batch");
  if (provenance.size() != images.size()) {
    throw ContractViolation("augment_pair: provenance size mismatch");
  }
  const std::size_t R = images[0].width;
  for (const auto& img : images) {
    if (img.width != R || img.height != R) {
      throw ContractViolation("augment_pair: images must share one square resolution");
    }
  }
  const std::size_t B = images.size(), per = 3 * R * R;
  ViewPair out{num::Tensor<float>({B, 3, R, R}), num::Tensor<float>({B, 3, R, R}),
               {provenance.begin(), provenance.end()}};
  for (std::size_t i = 0; i < B; ++i) {
    for (int view = 0; view < 2; ++view) {
      std::mt19937_64 rng(derive_seed(batch_seed, {i, static_cast<std::uint64_t>(view)}));
      const auto t = data::preprocess(augment_image(images[i], config, rng), R, normalization);
      auto& dst = view == 0 ? out.x_a : out.x_b;
      std::copy(t.data().begin(), t.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
  }
  return out;
}

}  // namespace protofew::ssl
