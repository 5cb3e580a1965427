#pragma once

// Procedural 10-class labelled image set used for desk-scale experiments:
// anti-aliased shapes and textures with random colours, placement and noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "bigroc/image_batch.hpp"
#include "bigroc/pgd.hpp"

namespace bigroc::desk {

inline constexpr int kShapeClasses = 10;

inline const std::array<const char*, kShapeClasses>& shape_class_names() {
  static const std::array<const char*, kShapeClasses> names = {
      "disc", "square", "triangle", "plus", "ring",
      "hbars", "vbars", "checker", "cross", "dstripes"};
  return names;
}

struct ShapesConfig {
  int count = 10000;
  int size = 16;
  std::uint64_t seed = 0;
  double noise = 0.04;
};

namespace detail {

inline double coverage(double sd) { return std::clamp(0.5 - sd, 0.0, 1.0); }

inline double box_sd(double dx, double dy, double hx, double hy) {
  const double qx = std::abs(dx) - hx, qy = std::abs(dy) - hy;
  const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

// Smooth periodic two-level pattern along coordinate u.
inline double stripes(double u, double period, double phase) {
  const double s = std::sin(2.0 * M_PI * u / period + phase);
  return std::clamp(0.5 + 1.5 * s, 0.0, 1.0);
}

struct ShapeParams {
  double cx, cy, r, period, phase, angle;
};

inline double shape_coverage(int cls, double x, double y, const ShapeParams& p) {
  const double dx = x - p.cx, dy = y - p.cy;
  const double cs = std::cos(p.angle), sn = std::sin(p.angle);
  const double rx = cs * dx + sn * dy, ry = -sn * dx + cs * dy;
  switch (cls) {
    case 0: return coverage(std::hypot(dx, dy) - p.r);
    case 1: return coverage(box_sd(rx, ry, 0.8 * p.r, 0.8 * p.r));
    case 2: {
      // Upward equilateral triangle inscribed in radius r.
      const double k = std::sqrt(3.0);
      const double h1 = ry - 0.5 * p.r;
      const double h2 = (-k * rx - ry) / 2.0 - 0.5 * p.r;
      const double h3 = (k * rx - ry) / 2.0 - 0.5 * p.r;
      return coverage(std::max({h1, h2, h3}));
    }
    case 3:
      return coverage(std::min(box_sd(rx, ry, p.r, 0.32 * p.r), box_sd(rx, ry, 0.32 * p.r, p.r)));
    case 4: return coverage(std::abs(std::hypot(dx, dy) - 0.72 * p.r) - 0.28 * p.r);
    case 5: return stripes(y, p.period, p.phase);
    case 6: return stripes(x, p.period, p.phase);
    case 7: {
      const double a = std::sin(2.0 * M_PI * x / p.period + p.phase);
      const double b = std::sin(2.0 * M_PI * y / p.period + p.phase);
      return std::clamp(0.5 + 1.5 * a * b, 0.0, 1.0);
    }
    case 8: {
      const double u = (dx + dy) / std::sqrt(2.0), v = (dx - dy) / std::sqrt(2.0);
      return coverage(std::min(box_sd(u, v, p.r, 0.3 * p.r), box_sd(u, v, 0.3 * p.r, p.r)));
    }
    case 9: return stripes((x + y) / std::sqrt(2.0), p.period, p.phase);
  }
  throw InvalidArgument("shape class " + std::to_string(cls) + " out of range");
}

}  // namespace detail

/// Renders one image of class `cls` into CHW storage with values in [-1, 1].
inline nn::Vec<float> render_shape(int cls, int size, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 3> fg{}, bg{};
  do {
    for (int c = 0; c < 3; ++c) {
      fg[c] = 2.0 * u(rng) - 1.0;
      bg[c] = 2.0 * u(rng) - 1.0;
    }
  } while (std::hypot(fg[0] - bg[0], fg[1] - bg[1], fg[2] - bg[2]) < 0.9);
  const double mid = 0.5 * (size - 1);
  detail::ShapeParams p;
  p.cx = mid + (u(rng) - 0.5) * 0.25 * size;
  p.cy = mid + (u(rng) - 0.5) * 0.25 * size;
  p.r = size * (0.25 + 0.12 * u(rng));
  p.period = size * (0.25 + 0.12 * u(rng));
  p.phase = 2.0 * M_PI * u(rng);
  p.angle = (u(rng) - 0.5) * 0.5;

  std::normal_distribution<double> nd(0.0, noise);
  const int hw = size * size;
  nn::Vec<float> img(3 * hw);
  for (int yy = 0; yy < size; ++yy)
    for (int xx = 0; xx < size; ++xx) {
      const double a = detail::shape_coverage(cls, xx, yy, p);
      for (int c = 0; c < 3; ++c) {
        const double v = bg[c] + a * (fg[c] - bg[c]) + (noise > 0 ? nd(rng) : 0.0);
        img[c * hw + yy * size + xx] = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  return img;
}

/// Balanced labelled set (label = index mod 10). Each image draws from its own
/// seed, so any prefix of a larger set equals the smaller set.
inline ImageBatch<float> make_shapes10(const ShapesConfig& cfg) {
  bigroc::detail::require(cfg.count >= 1, "shapes10: count must be >= 1");
  bigroc::detail::require(cfg.size >= 8, "shapes10: size must be >= 8");
  ImageBatch<float> batch(nn::Shape{3, cfg.size, cfg.size}, PixelRange(-1.0, 1.0), cfg.count);
  batch.labels.resize(cfg.count);
  batch.generator = "shapes10";
  for (int i = 0; i < cfg.count; ++i) {
    std::mt19937_64 rng(image_seed(cfg.seed, i));
    const int cls = i % kShapeClasses;
    batch.labels[i] = cls;
    batch.set_image(i, render_shape(cls, cfg.size, rng, cfg.noise));
  }
  return batch;
}

}  // namespace bigroc::desk
