#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "studa/core/rng.hpp"
#include "studa/config.hpp"
#include "studa/synth/types.hpp"

namespace studa::synth {

namespace detail {

// Radius of the smallest origin-centred disc containing the shape.
inline double bounding_radius(ShapeKind k, double size) {
  switch (k) {
    case ShapeKind::circle: return size / 2;
    case ShapeKind::square: return size / std::numbers::sqrt2;
    case ShapeKind::triangle: return size / std::sqrt(3.0);
    case ShapeKind::bar: return std::hypot(0.8 * size, std::max(1.5, 0.15 * size));
  }
  return size;
}

// Point (x, y) in object-local coordinates, unrotated.
inline bool inside(ShapeKind k, double size, double x, double y) {
  switch (k) {
    case ShapeKind::circle: return x * x + y * y <= size * size / 4;
    case ShapeKind::square: return std::abs(x) <= size / 2 && std::abs(y) <= size / 2;
    case ShapeKind::bar: return std::abs(x) <= 0.8 * size && std::abs(y) <= std::max(1.5, 0.15 * size);
    case ShapeKind::triangle: {
      // Equilateral, centroid at origin: three half-planes at distance R/2.
      const double r_in = size / (2 * std::sqrt(3.0));
      for (int i = 0; i < 3; ++i) {
        const double a = std::numbers::pi / 2 + i * 2 * std::numbers::pi / 3;
        if (-(x * std::cos(a) + y * std::sin(a)) > r_in) return false;
      }
      return true;
    }
  }
  return false;
}

struct Rgb {
  double r, g, b;
};

// Hue rotation in YIQ space; leaves luma unchanged.
inline Rgb rotate_hue(Rgb c, double degrees) {
  const double y = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  const double i = 0.596 * c.r - 0.274 * c.g - 0.322 * c.b;
  const double q = 0.211 * c.r - 0.523 * c.g + 0.312 * c.b;
  const double a = degrees * std::numbers::pi / 180.0;
  const double i2 = i * std::cos(a) - q * std::sin(a);
  const double q2 = i * std::sin(a) + q * std::cos(a);
  return {y + 0.956 * i2 + 0.621 * q2, y - 0.272 * i2 - 0.647 * q2, y - 1.106 * i2 + 1.703 * q2};
}

// Shared class palette; the domains differ only through StyleParams.
inline constexpr std::array<Rgb, kNumClasses> kPalette = {{
    {0.46, 0.46, 0.50},  // background
    {0.86, 0.22, 0.20},  // circle
    {0.22, 0.74, 0.26},  // square
    {0.20, 0.34, 0.88},  // triangle
    {0.90, 0.78, 0.16},  // bar
}};

}  // namespace detail

inline SceneLayout generate_layout(std::uint64_t layout_seed, const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(layout_seed, "layout"));
  SceneLayout layout;
  layout.layout_seed = layout_seed;
  layout.height = cfg.height;
  layout.width = cfg.width;
  const auto count = rng.integer(cfg.min_objects, cfg.max_objects);
  for (std::int64_t i = 0; i < count; ++i) {
    SceneObject o;
    o.kind = static_cast<ShapeKind>(rng.integer(0, 3));
    o.size = rng.uniform(cfg.object_size.lo, cfg.object_size.hi);
    o.rotation = rng.uniform(0.0, std::numbers::pi);
    const double r = detail::bounding_radius(o.kind, o.size);
    o.cx = rng.uniform(r, cfg.width - r);
    o.cy = rng.uniform(r, cfg.height - r);
    layout.objects.push_back(o);
  }
  return layout;
}

// The single fixed appearance of the source domain.
inline StyleParams source_style() { return StyleParams{}; }

inline StyleParams sample_target_style(std::uint64_t style_seed, const GeneratorConfig& cfg) {
  Rng rng(derive_seed(style_seed, "style"));
  StyleParams s;
  s.style_seed = style_seed;
  s.hue_shift = rng.uniform(cfg.hue_shift.lo, cfg.hue_shift.hi);
  s.illumination_direction = rng.uniform(0.0, 2 * std::numbers::pi);
  s.illumination_strength = rng.uniform(cfg.illumination_strength.lo, cfg.illumination_strength.hi);
  s.texture_frequency = rng.uniform(cfg.texture_frequency.lo, cfg.texture_frequency.hi);
  s.noise_sigma = rng.uniform(cfg.noise_sigma.lo, cfg.noise_sigma.hi);
  return s;
}

// Label map: background 0, objects drawn in order (later ones occlude).
inline std::vector<std::uint8_t> rasterize_labels(const SceneLayout& layout) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(layout.height) * layout.width, 0);
  for (const auto& o : layout.objects) {
    const double c = std::cos(o.rotation), s = std::sin(o.rotation);
    const double r = detail::bounding_radius(o.kind, o.size) + 1;
    const int y0 = std::max(0, static_cast<int>(o.cy - r)), y1 = std::min(layout.height - 1, static_cast<int>(o.cy + r));
    const int x0 = std::max(0, static_cast<int>(o.cx - r)), x1 = std::min(layout.width - 1, static_cast<int>(o.cx + r));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - o.cx, dy = y + 0.5 - o.cy;
        if (detail::inside(o.kind, o.size, c * dx + s * dy, -s * dx + c * dy))
          labels[static_cast<std::size_t>(y) * layout.width + x] = static_cast<std::uint8_t>(class_of(o.kind));
      }
  }
  return labels;
}

inline LabeledImage render(const SceneLayout& layout, Domain domain, const StyleParams& style,
                           double texture_amplitude = GeneratorConfig{}.texture_amplitude) {
  LabeledImage im;
  im.domain = domain;
  im.height = layout.height;
  im.width = layout.width;
  im.labels = rasterize_labels(layout);
  std::array<detail::Rgb, kNumClasses> palette;
  for (int k = 0; k < kNumClasses; ++k) palette[k] = detail::rotate_hue(detail::kPalette[k], style.hue_shift);
  Rng noise(derive_seed(style.style_seed ^ layout.layout_seed, "noise"));
  const double dx = std::cos(style.illumination_direction), dy = std::sin(style.illumination_direction);
  const double tex_angle = style.illumination_direction * 1.7 + 0.3;
  const double tx = std::cos(tex_angle), ty = std::sin(tex_angle);
  im.rgb.resize(static_cast<std::size_t>(im.height) * im.width * 3);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * im.width + x;
      const detail::Rgb base = palette[im.labels[p]];
      const double u = (x + 0.5) / im.width - 0.5, v = (y + 0.5) / im.height - 0.5;
      double gain = 1.0 + style.illumination_strength * 2.0 * (u * dx + v * dy);
      if (style.texture_frequency > 0)
        gain *= 1.0 + texture_amplitude * std::sin(2 * std::numbers::pi * style.texture_frequency * (u * tx + v * ty));
      const std::array<double, 3> ch = {base.r, base.g, base.b};
      for (int c = 0; c < 3; ++c) {
        double val = ch[c] * gain;
        if (style.noise_sigma > 0) val += noise.normal(0.0, style.noise_sigma);
        im.rgb[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(val * 255.0), 0L, 255L));
      }
    }
  return im;
}

}  // namespace studa::synth
