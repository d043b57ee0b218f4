#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "aaunet/segmask.hpp"

namespace aaunet {

using Rgb = std::array<uint8_t, 3>;

/// Overlay colours by class index; background is never painted.
/// ICH red, SDH blue, SAH yellow, EDH green, CSDH magenta, Pneumocranium cyan,
/// IVH orange.
inline constexpr std::array<Rgb, kNumClasses> kPalette{{
    {0, 0, 0},
    {255, 0, 0},
    {0, 0, 255},
    {255, 255, 0},
    {0, 255, 0},
    {255, 0, 255},
    {0, 255, 255},
    {255, 165, 0},
}};

/// round(clamp(v, 0, 1) * 255)
uint8_t to_gray8(float v);

/// Interleaved RGB: the grey image where the mask is background, the class
/// colour blended at `opacity` elsewhere. Throws DimensionError on a size mismatch.
std::vector<uint8_t> render_overlay(const Image& img, const SegMask& mask, double opacity = 0.6);

}  // namespace aaunet
