#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace aaunet {

inline constexpr int kNumClasses = 8;  // background + 7 lesion classes
inline constexpr int kNumLesionClasses = 7;

enum class LesionClass : uint8_t {
  Background = 0,
  ICH = 1,
  SDH = 2,
  SAH = 3,
  EDH = 4,
  CSDH = 5,
  Pneumocranium = 6,
  IVH = 7,
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "background", "ICH", "SDH", "SAH", "EDH", "CSDH", "Pneumocranium", "IVH"};

/// Per-pixel class indices of one slice, row-major.
struct SegMask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> labels;

  SegMask() = default;
  SegMask(int64_t h, int64_t w, uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<size_t>(h * w), fill) {}

  uint8_t& at(int64_t y, int64_t x) { return labels[static_cast<size_t>(y * width + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return labels[static_cast<size_t>(y * width + x)]; }
  bool operator==(const SegMask&) const = default;
};

/// Single-channel float image, row-major, nominally in [0, 1].
struct Image {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int64_t h, int64_t w, float fill = 0.f)
      : height(h), width(w), pixels(static_cast<size_t>(h * w), fill) {}

  float& at(int64_t y, int64_t x) { return pixels[static_cast<size_t>(y * width + x)]; }
  float at(int64_t y, int64_t x) const { return pixels[static_cast<size_t>(y * width + x)]; }
  bool operator==(const Image&) const = default;
};

/// Three consecutive slices (previous, centre, next) as a 3 x H x W block.
struct SliceStack {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> data;

  float& at(int c, int64_t y, int64_t x) {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
  float at(int c, int64_t y, int64_t x) const {
    return data[static_cast<size_t>((c * height + y) * width + x)];
  }
  bool operator==(const SliceStack&) const = default;
};

}  // namespace aaunet
