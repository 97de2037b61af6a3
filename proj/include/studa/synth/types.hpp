#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "studa/core/errors.hpp"
#include "studa/core/tensor.hpp"

namespace studa::synth {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr int kNumClasses = 5;
inline const std::array<std::string, kNumClasses> kClassNames = {"background", "circle", "square", "triangle", "bar"};

enum class ShapeKind : int { circle = 0, square = 1, triangle = 2, bar = 3 };
enum class Domain { source, target };

inline const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }
inline int class_of(ShapeKind k) { return static_cast<int>(k) + 1; }

struct SceneObject {
  ShapeKind kind = ShapeKind::circle;
  double cx = 0, cy = 0;  // pixel coordinates (x right, y down)
  double size = 0;        // pixels
  double rotation = 0;    // radians
  bool operator==(const SceneObject&) const = default;
};

struct SceneLayout {
  std::uint64_t layout_seed = 0;
  int height = 0, width = 0;
  std::vector<SceneObject> objects;
  bool operator==(const SceneLayout&) const = default;
};

struct StyleParams {
  std::uint64_t style_seed = 0;
  double hue_shift = 0;               // degrees
  double illumination_direction = 0;  // radians
  double illumination_strength = 0;   // [0, 1]
  double texture_frequency = 0;       // cycles per image; 0 disables texture
  double noise_sigma = 0;             // intensity units on the [0, 1] scale
  bool operator==(const StyleParams&) const = default;
};

// An image (8-bit RGB, HWC) with its label map. Pixel values map to [-1, 1]
// as v / 127.5 - 1, so images round-trip exactly through 8-bit PNG.
struct LabeledImage {
  std::string id;
  Domain domain = Domain::source;
  int height = 0, width = 0;
  std::vector<std::uint8_t> rgb;     // height*width*3
  std::vector<std::uint8_t> labels;  // height*width, empty when withheld
  bool has_labels() const { return !labels.empty(); }
  bool operator==(const LabeledImage&) const = default;
};

inline float pixel_value(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

// Writes one image as CHW values in [-1, 1] starting at dst.
template <class T>
void to_chw(const LabeledImage& im, T* dst) {
  const int hw = im.height * im.width;
  for (int i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) dst[c * hw + i] = static_cast<T>(pixel_value(im.rgb[i * 3 + c]));
}

template <class T>
Tensor<T> batch_tensor(const std::vector<const LabeledImage*>& ims) {
  if (ims.empty()) throw ShapeError("empty image batch");
  const int H = ims[0]->height, W = ims[0]->width;
  Tensor<T> t(Shape{static_cast<int>(ims.size()), 3, H, W});
  for (std::size_t n = 0; n < ims.size(); ++n) {
    if (ims[n]->height != H || ims[n]->width != W) throw ShapeError("mixed resolutions in batch");
    to_chw(*ims[n], t.data() + n * 3 * H * W);
  }
  return t;
}

template <class T>
Tensor<T> image_tensor(const LabeledImage& im) {
  return batch_tensor<T>({&im});
}

// Inverse of the [-1,1] mapping for network outputs (rounds and clamps).
template <class T>
std::vector<std::uint8_t> chw_to_rgb(const T* src, int height, int width) {
  const int hw = height * width;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(hw) * 3);
  for (int i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = (static_cast<double>(src[c * hw + i]) + 1.0) * 127.5;
      out[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return out;
}

}  // namespace studa::synth
