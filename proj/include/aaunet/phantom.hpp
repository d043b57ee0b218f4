#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aaunet/rng.hpp"
#include "aaunet/segmask.hpp"

namespace aaunet {

inline constexpr int kMinSlices = 30;
inline constexpr int kMaxSlices = 50;
// Pneumocranium total area per affected slice, in pixels at 512 x 512.
inline constexpr int kPneumoMinArea512 = 15;
inline constexpr int kPneumoMaxArea512 = 86;
inline constexpr double kTargetLesionFreeFraction = 0.4655;

/// One lesion instance persisting over a contiguous slice range.
struct LesionSpec {
  LesionClass cls = LesionClass::ICH;
  int first_slice = 0;
  int last_slice = 0;  // inclusive
  double angle = 0;    // radians around the head centre; image x axis = 0, y grows down
  double radial = 0.4; // normalized radius in the brain (interior lesions)
  double size = 0.5;   // class-specific scale in [0, 1]
  uint64_t seed = 0;   // shape detail

  bool operator==(const LesionSpec&) const = default;
};

struct LesionRecipe {
  int n_slices = 0;  // 0: drawn from [30, 50] using the case seed
  std::vector<LesionSpec> lesions;

  bool operator==(const LesionRecipe&) const = default;
};

struct PhantomCase {
  std::string patient_id;
  uint64_t seed = 0;
  int size = 0;
  LesionRecipe recipe;  // with n_slices resolved
  std::vector<Image> images;
  std::vector<SegMask> masks;

  int n_slices() const { return static_cast<int>(images.size()); }
  /// Lesion classes present in the mask of one slice, ascending.
  std::vector<LesionClass> inventory(int slice) const;
};

/// Renders a synthetic head phantom.
///
/// Skull ring, textured brain and ventricles; lesions per `recipe`. Masks mark
/// exactly the pixels painted for each lesion. Throws ConfigError when `size`
/// is not a positive multiple of 32 or the slice count is outside [30, 50], and
/// GenerationError when two lesions claim the same pixel or a lesion renders
/// empty on a slice it spans.
PhantomCase generate_phantom_case(uint64_t seed, int size, const LesionRecipe& recipe,
                                  const std::string& patient_id = "P000");

/// Draws a recipe containing every class in `classes`. The first lesion spans
/// a contiguous band covering `lesion_fraction` of the slices; the rest lie
/// inside that band.
LesionRecipe sample_recipe(Rng& rng, int n_slices, const std::vector<LesionClass>& classes,
                           double lesion_fraction);

/// Pixel count of class `cls` divided by the number of pixels whose centres
/// fall inside the convex hull of that class's pixel centres. 1 for convex
/// shapes, small for crescents. Returns 0 for an absent class.
double convexity_ratio(const SegMask& mask, uint8_t cls);

int64_t class_pixel_count(const SegMask& mask, uint8_t cls);

/// Pneumocranium area for a slice at `size`, given an area at 512 scale.
int pneumo_area_at_size(double area512, int size);

}  // namespace aaunet
