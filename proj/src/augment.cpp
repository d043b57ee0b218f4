#include "aaunet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>

#include "aaunet/errors.hpp"
#include "aaunet/rng.hpp"

namespace aaunet {

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.flip_prob = 0;
  p.max_rotation_deg = 0;
  p.min_crop_area = 1;
  p.contrast_lo = p.contrast_hi = 1;
  p.max_brightness = 0;
  p.saturation = false;
  return p;
}

bool AugmentPolicy::is_identity() const { return *this == identity(); }

void AugmentPolicy::validate() const {
  if (flip_prob < 0 || flip_prob > 1) throw ConfigError("augment.flip_prob must be in [0, 1]");
  if (max_rotation_deg < 0 || max_rotation_deg > 180) {
    throw ConfigError("augment.max_rotation_deg must be in [0, 180]");
  }
  if (min_crop_area <= 0 || min_crop_area > 1) {
    throw ConfigError("augment.min_crop_area must be in (0, 1]");
  }
  if (contrast_lo <= 0 || contrast_hi < contrast_lo) {
    throw ConfigError("augment contrast range must satisfy 0 < lo <= hi");
  }
  if (max_brightness < 0 || max_brightness > 1) {
    throw ConfigError("augment.max_brightness must be in [0, 1]");
  }
}

std::pair<SliceStack, SegMask> apply_geometric(const SliceStack& x, const SegMask& mask,
                                               const GeometricTransform& t) {
  if (x.height != mask.height || x.width != mask.width) {
    throw DimensionError("augment: image and mask sizes differ");
  }
  const int64_t H = x.height, W = x.width;
  const double cx = W / 2.0, cy = H / 2.0;
  double c = 1, s = 0;
  // Exact quarter turns keep the nearest-neighbour mask mapping a permutation.
  const double quarter = t.rotation_deg / 90.0;
  if (quarter == std::round(quarter)) {
    const int k = ((static_cast<int>(std::lround(quarter)) % 4) + 4) % 4;
    const int cs[4] = {1, 0, -1, 0}, sn[4] = {0, 1, 0, -1};
    c = cs[k];
    s = sn[k];
  } else {
    const double r = t.rotation_deg * std::numbers::pi / 180.0;
    c = std::cos(r);
    s = std::sin(r);
  }
  SliceStack out_x;
  out_x.height = H;
  out_x.width = W;
  out_x.data.assign(x.data.size(), 0.f);
  SegMask out_m(H, W);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t xx = 0; xx < W; ++xx) {
      // Crop window, then rotation about the image centre, then flip.
      const double qx = t.crop_x0 + (xx + 0.5) * t.crop_scale;
      const double qy = t.crop_y0 + (y + 0.5) * t.crop_scale;
      double sx = cx + c * (qx - cx) - s * (qy - cy);
      const double sy = cy + s * (qx - cx) + c * (qy - cy);
      if (t.flip) sx = W - sx;
      const double fx = std::floor(sx), fy = std::floor(sy);
      if (fx >= 0 && fx < W && fy >= 0 && fy < H) {
        out_m.at(y, xx) = mask.at(static_cast<int64_t>(fy), static_cast<int64_t>(fx));
      }
      // Bilinear on pixel centres; samples off the grid contribute 0.
      const double gx = sx - 0.5, gy = sy - 0.5;
      const double x0 = std::floor(gx), y0 = std::floor(gy);
      const double ax = gx - x0, ay = gy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0;
        for (int dy = 0; dy <= 1; ++dy) {
          for (int dx = 0; dx <= 1; ++dx) {
            const int64_t px = static_cast<int64_t>(x0) + dx, py = static_cast<int64_t>(y0) + dy;
            if (px < 0 || px >= W || py < 0 || py >= H) continue;
            const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
            if (w != 0) acc += w * x.at(ch, py, px);
          }
        }
        out_x.at(ch, y, xx) = static_cast<float>(acc);
      }
    }
  }
  return {std::move(out_x), std::move(out_m)};
}

SliceStack apply_photometric(const SliceStack& x, const PhotometricTransform& t) {
  SliceStack out = x;
  for (auto& v : out.data) {
    const double r = (v - 0.5) * t.contrast + 0.5 + t.brightness;
    v = static_cast<float>(std::clamp(r, 0.0, 1.0));
  }
  return out;
}

std::pair<SliceStack, SegMask> augment(const SliceStack& x, const SegMask& mask, uint64_t seed,
                                       const AugmentPolicy& policy) {
  if (policy.is_identity()) return {x, mask};
  policy.validate();
  if (policy.saturation) {
    static std::once_flag once;
    std::call_once(once, [] {
      std::fprintf(stderr, "augment: saturation has no effect on single-intensity slices\n");
    });
  }
  Rng rng(seed);
  GeometricTransform g;
  g.flip = rng.bernoulli(policy.flip_prob);
  g.rotation_deg = rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
  const double area = rng.uniform(policy.min_crop_area, 1.0);
  g.crop_scale = std::sqrt(area);
  g.crop_x0 = rng.uniform() * (1 - g.crop_scale) * x.width;
  g.crop_y0 = rng.uniform() * (1 - g.crop_scale) * x.height;
  PhotometricTransform p;
  p.contrast = rng.uniform(policy.contrast_lo, policy.contrast_hi);
  p.brightness = rng.uniform(-policy.max_brightness, policy.max_brightness);
  auto [gx, gm] = apply_geometric(x, mask, g);
  return {apply_photometric(gx, p), std::move(gm)};
}

}  // namespace aaunet
