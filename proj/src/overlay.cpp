#include "aaunet/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "aaunet/errors.hpp"

namespace aaunet {

uint8_t to_gray8(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

std::vector<uint8_t> render_overlay(const Image& img, const SegMask& mask, double opacity) {
  if (img.height != mask.height || img.width != mask.width) {
    throw DimensionError("render_overlay: image is " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + ", mask is " + std::to_string(mask.height) +
                         "x" + std::to_string(mask.width));
  }
  std::vector<uint8_t> rgb(img.pixels.size() * 3);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const uint8_t g = to_gray8(img.pixels[i]);
    const uint8_t cls = mask.labels[i];
    for (int c = 0; c < 3; ++c) {
      if (cls == 0 || cls >= kNumClasses) {
        rgb[3 * i + c] = g;
      } else {
        const double v = (1 - opacity) * g + opacity * kPalette[cls][c];
        rgb[3 * i + c] = static_cast<uint8_t>(std::lround(v));
      }
    }
  }
  return rgb;
}

}  // namespace aaunet
