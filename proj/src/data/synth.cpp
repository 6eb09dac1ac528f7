#include "protofew/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "protofew/errors.hpp"
#include "protofew/seed.hpp"

namespace protofew::data {

namespace {

using Rgb = std::array<float, 3>;

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  double r, g, b;
  switch (static_cast<int>(i) % 6) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

enum class ShapeKind { Disc, Square, Ring, Cross, HBar, VBar };
constexpr int kShapeKinds = 6;

struct Shape {
  ShapeKind kind;
  double cx, cy, radius;
  Rgb color;
};

struct ClassPattern {
  double bg_hue, bg_sat, bg_val;
  std::array<Shape, 2> shapes;
};

ClassPattern draw_pattern(std::mt19937_64& rng, int palette) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  ClassPattern p;
  const double hue_lo = palette == 1 ? 0.35 : 0.0;
  const double hue_hi = palette == 1 ? 0.95 : 1.0;
  if (palette == 0) {
    p.bg_hue = range(0, 1), p.bg_sat = range(0.3, 0.6), p.bg_val = range(0.15, 0.4);
  } else if (palette == 1) {
    p.bg_hue = range(hue_lo, hue_hi), p.bg_sat = range(0.15, 0.45), p.bg_val = range(0.55, 0.85);
  } else {
    p.bg_hue = range(0, 1), p.bg_sat = range(0.0, 0.12), p.bg_val = range(0.35, 0.65);
  }
  for (auto& s : p.shapes) {
    s.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, kShapeKinds - 1)(rng));
    s.cx = range(0.28, 0.72);
    s.cy = range(0.28, 0.72);
    s.radius = range(0.14, 0.26);
    if (palette == 0) {
      s.color = hsv(range(0, 1), range(0.6, 0.95), range(0.65, 0.95));
    } else if (palette == 1) {
      s.color = hsv(range(hue_lo, hue_hi), range(0.5, 0.85), range(0.15, 0.45));
    } else {
      const bool dark = u(rng) < 0.5;
      s.color = hsv(range(0, 1), range(0.0, 0.2), dark ? range(0.0, 0.2) : range(0.8, 1.0));
    }
  }
  return p;
}

// Coverage in [0,1] of pixel (x,y) (normalized coords) by a shape, with a
// one-pixel soft edge.
double coverage(const Shape& s, double x, double y, double px) {
  const double dx = x - s.cx, dy = y - s.cy;
  double dist;  // signed distance, negative inside
  switch (s.kind) {
    case ShapeKind::Disc:
      dist = std::hypot(dx, dy) - s.radius;
      break;
    case ShapeKind::Square:
      dist = std::max(std::abs(dx), std::abs(dy)) - 0.85 * s.radius;
      break;
    case ShapeKind::Ring:
      dist = std::abs(std::hypot(dx, dy) - 0.7 * s.radius) - 0.3 * s.radius;
      break;
    case ShapeKind::Cross: {
      const double arm = 0.3 * s.radius;
      const double h = std::max(std::abs(dx) - s.radius, std::abs(dy) - arm);
      const double v = std::max(std::abs(dy) - s.radius, std::abs(dx) - arm);
      dist = std::min(h, v);
      break;
    }
    case ShapeKind::HBar:
      dist = std::max(std::abs(dx) - 1.2 * s.radius, std::abs(dy) - 0.4 * s.radius);
      break;
    default:
      dist = std::max(std::abs(dy) - 1.2 * s.radius, std::abs(dx) - 0.4 * s.radius);
      break;
  }
  return std::clamp(0.5 - dist / px, 0.0, 1.0);
}

Image render(const ClassPattern& pattern, std::size_t res, const SynthStyle& style,
             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, style.pixel_noise);
  const double shift_x = style.position_jitter * u(rng);
  const double shift_y = style.position_jitter * u(rng);
  const double zoom = 1.0 + style.scale_jitter * u(rng);
  const double brightness = 0.5 * style.brightness_jitter * u(rng);
  const double contrast = 1.0 + style.contrast_jitter * u(rng);
  const Rgb background = hsv(pattern.bg_hue + style.background_jitter * u(rng), pattern.bg_sat,
                             pattern.bg_val);

  Shape distractor{ShapeKind::Disc, 0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng),
                   0.06 + 0.03 * u(rng),
                   hsv(0.5 + 0.5 * u(rng), 0.5 + 0.3 * u(rng), 0.5 + 0.3 * u(rng))};

  std::array<Shape, 2> shapes = pattern.shapes;
  for (auto& s : shapes) {
    s.cx = 0.5 + (s.cx - 0.5) * zoom + shift_x;
    s.cy = 0.5 + (s.cy - 0.5) * zoom + shift_y;
    s.radius *= zoom;
  }

  Image img(res, res);
  const double px = 1.0 / static_cast<double>(res);
  for (std::size_t yi = 0; yi < res; ++yi) {
    for (std::size_t xi = 0; xi < res; ++xi) {
      const double x = (static_cast<double>(xi) + 0.5) * px;
      const double y = (static_cast<double>(yi) + 0.5) * px;
      std::array<double, 3> c{background[0], background[1], background[2]};
      for (const auto& s : shapes) {
        const double a = coverage(s, x, y, px);
        for (int k = 0; k < 3; ++k) c[k] = (1 - a) * c[k] + a * s.color[k];
      }
      if (style.distractor) {
        const double a = coverage(distractor, x, y, px);
        for (int k = 0; k < 3; ++k) c[k] = (1 - a) * c[k] + a * distractor.color[k];
      }
      for (int k = 0; k < 3; ++k) img.at(k, yi, xi) = static_cast<float>(c[k]);
    }
  }
  // Photometric nuisance: contrast about the mean, a brightness shift, then noise.
  double mean = 0;
  for (float v : img.pixels) mean += v;
  mean /= static_cast<double>(img.pixels.size());
  for (auto& v : img.pixels) {
    double t = (v - mean) * contrast + mean + brightness;
    if (style.pixel_noise > 0) t += noise(rng);
    v = static_cast<float>(std::clamp(t, 0.0, 1.0));
  }
  return img;
}

}  // namespace

ImageDataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::size_t resolution,
                           std::uint64_t seed, const SynthStyle& style, std::size_t first_class) {
  if (num_classes == 0 || per_class == 0 || resolution == 0) {
    throw ContractViolation("synth_dataset: arguments must be positive");
  }
  if (style.palette < 0 || style.palette > 2) {
    throw ContractViolation("synth_dataset: palette must be 0, 1 or 2");
  }
  std::vector<ImageDataset::ClassImages> classes;
  for (std::size_t k = first_class; k < first_class + num_classes; ++k) {
    std::mt19937_64 pattern_rng(derive_seed(seed, {static_cast<std::uint64_t>(style.palette), k}));
    const ClassPattern pattern = draw_pattern(pattern_rng, style.palette);
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03zu", k);
    ImageDataset::ClassImages entry{name, {}};
    for (std::size_t i = 0; i < per_class; ++i) {
      std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(style.palette), k, i, 1}));
      entry.images.push_back(render(pattern, resolution, style, rng));
    }
    classes.push_back(std::move(entry));
  }
  char id[96];
  std::snprintf(id, sizeof id, "synth-p%d-s%llu-c%zu+%zu", style.palette,
                static_cast<unsigned long long>(seed), first_class, num_classes);
  return ImageDataset::from_images(id, std::move(classes));
}

}  // namespace protofew::data
