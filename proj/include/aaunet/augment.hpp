#pragma once

#include <cstdint>
#include <utility>

#include "aaunet/segmask.hpp"

namespace aaunet {

struct AugmentPolicy {
  double flip_prob = 0.5;           // horizontal
  double max_rotation_deg = 15.0;   // uniform in [-max, max]
  double min_crop_area = 0.8;       // crop side drawn so area >= this fraction; 1 disables
  double contrast_lo = 0.8, contrast_hi = 1.2;
  double max_brightness = 0.1;
  bool saturation = true;  // no-op on single-intensity data; logged once

  static AugmentPolicy identity();
  bool is_identity() const;
  /// Throws ConfigError for out-of-range fields.
  void validate() const;
  bool operator==(const AugmentPolicy&) const = default;
};

/// Output pixel centre p maps to source point flip(rotate(crop(p))).
struct GeometricTransform {
  bool flip = false;
  double rotation_deg = 0;
  double crop_scale = 1;  // side of the crop window relative to the image
  double crop_x0 = 0, crop_y0 = 0;  // window origin in pixels
};

struct PhotometricTransform {
  double contrast = 1;
  double brightness = 0;
};

/// Same mapping for every image channel (bilinear) and the mask (nearest).
/// Points falling outside the source read as 0 / background.
std::pair<SliceStack, SegMask> apply_geometric(const SliceStack& x, const SegMask& mask,
                                               const GeometricTransform& t);

/// v -> clip((v - 0.5) * contrast + 0.5 + brightness, 0, 1) on every channel.
SliceStack apply_photometric(const SliceStack& x, const PhotometricTransform& t);

/// Draws a geometric and photometric transform from `seed` and applies them.
/// The identity policy returns the inputs unchanged.
std::pair<SliceStack, SegMask> augment(const SliceStack& x, const SegMask& mask, uint64_t seed,
                                       const AugmentPolicy& policy);

}  // namespace aaunet
