#include "aaunet/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "aaunet/errors.hpp"

namespace aaunet {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  throw IoError(std::string(msg) + " in " +
                *static_cast<const std::string*>(png_get_error_ptr(png)));
}

void png_warn(png_structp, png_const_charp) {}

// rows: height pointers into a packed buffer of `bit_depth` samples.
void write_png(const std::filesystem::path& path, int64_t height, int64_t width, int color_type,
               int bit_depth, const std::vector<uint8_t>& bytes) {
  const std::string where = path.string();
  FilePtr f(std::fopen(where.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + where);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, const_cast<std::string*>(&where),
                                            png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const size_t stride = static_cast<size_t>(width) * channels * (bit_depth / 8);
    for (int64_t y = 0; y < height; ++y) {
      png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError("write failed: " + where);
}

struct RawPng {
  int64_t height = 0, width = 0;
  int bit_depth = 0, color_type = 0;
  std::vector<uint8_t> bytes;  // 16-bit samples big-endian as stored
};

RawPng read_png(const std::filesystem::path& path) {
  const std::string where = path.string();
  FilePtr f(std::fopen(where.c_str(), "rb"));
  if (!f) throw IoError("cannot open: " + where);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + where);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, const_cast<std::string*>(&where),
                                           png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  RawPng out;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    out.color_type = png_get_color_type(png, info);
    const size_t stride = png_get_rowbytes(png, info);
    out.bytes.resize(stride * static_cast<size_t>(out.height));
    for (int64_t y = 0; y < out.height; ++y) {
      png_read_row(png, out.bytes.data() + y * stride, nullptr);
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_image_png16(const std::filesystem::path& path, const Image& img) {
  std::vector<uint8_t> bytes(img.pixels.size() * 2);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img.pixels[i]), 0.0, 1.0);
    const auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
    bytes[2 * i] = static_cast<uint8_t>(q >> 8);
    bytes[2 * i + 1] = static_cast<uint8_t>(q & 0xff);
  }
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

Image read_image_png16(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || raw.bit_depth != 16) {
    throw IoError("expected 16-bit grayscale PNG: " + path.string());
  }
  Image img(raw.height, raw.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const unsigned q = (unsigned(raw.bytes[2 * i]) << 8) | raw.bytes[2 * i + 1];
    img.pixels[i] = static_cast<float>(q / 65535.0);
  }
  return img;
}

void write_mask_png(const std::filesystem::path& path, const SegMask& mask) {
  write_png(path, mask.height, mask.width, PNG_COLOR_TYPE_GRAY, 8, mask.labels);
}

SegMask read_mask_png(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || raw.bit_depth != 8) {
    throw IoError("expected 8-bit grayscale PNG: " + path.string());
  }
  SegMask mask(raw.height, raw.width);
  for (size_t i = 0; i < mask.labels.size(); ++i) {
    const uint8_t v = raw.bytes[i];
    if (v >= kNumClasses) {
      throw DataError("class index " + std::to_string(v) + " at pixel (" +
                      std::to_string(int64_t(i) / raw.width) + ", " +
                      std::to_string(int64_t(i) % raw.width) + ") in " + path.string());
    }
    mask.labels[i] = v;
  }
  return mask;
}

void write_gray8_png(const std::filesystem::path& path, int64_t height, int64_t width,
                     const std::vector<uint8_t>& pixels) {
  write_png(path, height, width, PNG_COLOR_TYPE_GRAY, 8, pixels);
}

void write_rgb8_png(const std::filesystem::path& path, int64_t height, int64_t width,
                    const std::vector<uint8_t>& rgb) {
  write_png(path, height, width, PNG_COLOR_TYPE_RGB, 8, rgb);
}

}  // namespace aaunet
