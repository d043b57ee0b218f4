#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aaunet/segmask.hpp"

namespace aaunet {

/// Single-channel 16-bit PNG; stored value = round(clamp(v, 0, 1) * 65535).
void write_image_png16(const std::filesystem::path& path, const Image& img);
Image read_image_png16(const std::filesystem::path& path);

/// Single-channel 8-bit PNG of class indices. Reading rejects values above 7.
void write_mask_png(const std::filesystem::path& path, const SegMask& mask);
SegMask read_mask_png(const std::filesystem::path& path);

/// 8-bit grayscale, values already quantized.
void write_gray8_png(const std::filesystem::path& path, int64_t height, int64_t width,
                     const std::vector<uint8_t>& pixels);
/// 8-bit RGB, interleaved.
void write_rgb8_png(const std::filesystem::path& path, int64_t height, int64_t width,
                    const std::vector<uint8_t>& rgb);

}  // namespace aaunet
