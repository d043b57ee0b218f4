#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "aaunet/augment.hpp"
#include "aaunet/dataset.hpp"
#include "aaunet/errors.hpp"
#include "aaunet/overlay.hpp"
#include "aaunet/phantom.hpp"
#include "aaunet/png_io.hpp"

using namespace aaunet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("aaunet_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

LesionRecipe single(LesionClass cls, double angle, double size, int n = 30, int first = 10, int last = 20) {
  LesionRecipe r;
  r.n_slices = n;
  LesionSpec s;
  s.cls = cls;
  s.first_slice = first;
  s.last_slice = last;
  s.angle = angle;
  s.size = size;
  s.seed = 5;
  r.lesions.push_back(s);
  return r;
}

std::pair<double, double> centroid(const SegMask& m, uint8_t cls) {
  double sx = 0, sy = 0, n = 0;
  for (int64_t y = 0; y < m.height; ++y)
    for (int64_t x = 0; x < m.width; ++x)
      if (m.at(y, x) == cls) {
        sx += x;
        sy += y;
        ++n;
      }
  return {sx / n, sy / n};
}

double mean_intensity(const PhantomCase& pc, int s, uint8_t cls) {
  double sum = 0, n = 0;
  for (size_t i = 0; i < pc.masks[s].labels.size(); ++i)
    if (pc.masks[s].labels[i] == cls) {
      sum += pc.images[s].pixels[i];
      ++n;
    }
  return sum / n;
}

const Dataset& dataset51() {
  static const Dataset ds = generate_dataset(7, 51, 64);
  return ds;
}

}  // namespace

TEST(Phantom, EmptyRecipeIsAllBackground) {
  LesionRecipe r;
  r.n_slices = 32;
  auto pc = generate_phantom_case(1, 64, r);
  ASSERT_EQ(pc.n_slices(), 32);
  for (int s = 0; s < 32; ++s) {
    for (auto l : pc.masks[s].labels) ASSERT_EQ(l, 0);
    float mx = 0;
    for (float v : pc.images[s].pixels) mx = std::max(mx, v);
    EXPECT_GT(mx, 0.5f);
  }
}

TEST(Phantom, ConfigErrors) {
  LesionRecipe r;
  r.n_slices = 30;
  EXPECT_THROW(generate_phantom_case(1, 48, r), ConfigError);
  r.n_slices = 29;
  EXPECT_THROW(generate_phantom_case(1, 64, r), ConfigError);
  r.n_slices = 51;
  EXPECT_THROW(generate_phantom_case(1, 64, r), ConfigError);
}

TEST(Phantom, DeterministicAndResolvesSliceCount) {
  auto rec = single(LesionClass::ICH, 0.5, 0.6);
  rec.lesions[0].radial = 0.4;
  auto a = generate_phantom_case(9, 64, rec), b = generate_phantom_case(9, 64, rec);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.masks, b.masks);
  LesionRecipe open;
  auto c = generate_phantom_case(10, 64, open);
  EXPECT_GE(c.n_slices(), kMinSlices);
  EXPECT_LE(c.n_slices(), kMaxSlices);
  EXPECT_EQ(c.recipe.n_slices, c.n_slices());
}

TEST(Phantom, PneumocraniumAreaAt512) {
  for (uint64_t seed : {1u, 2u}) {
    auto rec = single(LesionClass::Pneumocranium, -1.5, 0.5, 30, 5, 24);
    rec.lesions[0].seed = seed;
    auto pc = generate_phantom_case(seed, 512, rec);
    for (int s = 0; s < 30; ++s) {
      const auto a = class_pixel_count(pc.masks[s], 6);
      if (s < 5 || s > 24) {
        EXPECT_EQ(a, 0);
      } else {
        EXPECT_GE(a, kPneumoMinArea512) << "slice " << s;
        EXPECT_LE(a, kPneumoMaxArea512) << "slice " << s;
      }
    }
  }
}

TEST(Phantom, LesionsRenderOnEverySpannedSlice) {
  const auto& ds = dataset51();
  for (const auto& pc : ds.cases)
    for (const auto& l : pc.recipe.lesions)
      for (int s = l.first_slice; s <= l.last_slice; ++s)
        ASSERT_GT(class_pixel_count(pc.masks[s], static_cast<uint8_t>(l.cls)), 0) << pc.patient_id << " slice " << s;
}

TEST(Phantom, SdhAndEdhShareLocationAndIntensityButNotShape) {
  for (double angle : {0.2, 3.0, -2.9}) {
    auto sdh = generate_phantom_case(3, 128, single(LesionClass::SDH, angle, 0.6));
    auto edh = generate_phantom_case(3, 128, single(LesionClass::EDH, angle, 0.6));
    for (int s = 12; s <= 18; s += 3) {
      const auto [sx, sy] = centroid(sdh.masks[s], 2);
      const auto [ex, ey] = centroid(edh.masks[s], 4);
      EXPECT_LT(std::hypot(sx - ex, sy - ey), 0.1 * 128) << "angle " << angle;
      const double is = mean_intensity(sdh, s, 2), ie = mean_intensity(edh, s, 4);
      EXPECT_LT(std::abs(is - ie) / ie, 0.05);
      EXPECT_GE(convexity_ratio(edh.masks[s], 4), 0.9);
      EXPECT_LE(convexity_ratio(sdh.masks[s], 2), 0.75);
    }
  }
}

TEST(Phantom, ConvexityRatioBasics) {
  SegMask sq(10, 10);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) sq.at(y, x) = 1;
  EXPECT_DOUBLE_EQ(convexity_ratio(sq, 1), 1.0);
  EXPECT_EQ(convexity_ratio(sq, 2), 0.0);
  SegMask ell(10, 10);
  for (int i = 0; i < 8; ++i) ell.at(9, i) = ell.at(9 - i, 0) = 1;
  EXPECT_LT(convexity_ratio(ell, 1), 0.5);
}

TEST(Dataset, SplitCounts) {
  EXPECT_EQ(split_counts(51), (SplitCounts{40, 4, 7}));
  EXPECT_EQ(split_counts(7), (SplitCounts{5, 1, 1}));
  EXPECT_THROW(generate_dataset(1, 6, 64), ConfigError);
  EXPECT_THROW(generate_dataset(1, 7, 40), ConfigError);
}

TEST(Dataset, NoLeakageCoverageAndFraction) {
  const auto& ds = dataset51();
  EXPECT_EQ(ds.manifest.counts(), (SplitCounts{40, 4, 7}));
  std::map<std::string, std::string> owner;
  for (const char* split : {"train", "val", "test"})
    for (const auto& id : ds.manifest.patients_in(split)) {
      EXPECT_TRUE(owner.emplace(id, split).second) << id << " appears in " << owner[id] << " and " << split;
    }
  EXPECT_EQ(owner.size(), 51u);
  for (const char* split : {"train", "val", "test"}) {
    std::set<int> seen;
    for (const auto* pc : ds.split(split))
      for (int s = 0; s < pc->n_slices(); ++s)
        for (auto c : pc->inventory(s)) seen.insert(static_cast<int>(c));
    EXPECT_EQ(seen.size(), 7u) << split;
  }
  int64_t free = 0, total = 0;
  for (const auto& pc : ds.cases)
    for (int s = 0; s < pc.n_slices(); ++s) {
      ++total;
      free += pc.inventory(s).empty();
      for (auto l : pc.masks[s].labels) ASSERT_LT(l, kNumClasses);
    }
  EXPECT_DOUBLE_EQ(ds.manifest.lesion_free_fraction, double(free) / double(total));
  EXPECT_NEAR(ds.manifest.lesion_free_fraction, kTargetLesionFreeFraction, 0.03);
}

TEST(Dataset, BitDeterministic) {
  auto a = generate_dataset(11, 7, 64), b = generate_dataset(11, 7, 64);
  EXPECT_EQ(a.manifest, b.manifest);
  for (size_t i = 0; i < a.cases.size(); ++i) {
    EXPECT_EQ(a.cases[i].images, b.cases[i].images);
    EXPECT_EQ(a.cases[i].masks, b.cases[i].masks);
  }
  auto c = generate_dataset(12, 7, 64);
  EXPECT_NE(a.cases[0].images, c.cases[0].images);
}

TEST(Dataset, WriteLoadAndRegenerate) {
  const auto root = scratch("ds");
  const auto m = write_dataset(root, 5, 7, 64);
  EXPECT_TRUE(fs::exists(root / "manifest.json"));
  EXPECT_EQ(load_manifest(root / "manifest.json"), m);
  const auto mem = generate_dataset(5, 7, 64);
  const auto disk = load_dataset(root);
  ASSERT_EQ(disk.cases.size(), 7u);
  for (size_t i = 0; i < 7; ++i) {
    const auto& a = mem.cases[i];
    const auto& b = disk.cases[i];
    EXPECT_EQ(a.masks, b.masks);
    EXPECT_EQ(a.recipe, b.recipe);
    for (int s = 0; s < a.n_slices(); ++s)
      for (size_t p = 0; p < a.images[s].pixels.size(); ++p)
        ASSERT_LE(std::abs(a.images[s].pixels[p] - b.images[s].pixels[p]), 1.0 / 65535) << i << "/" << s;
    // The sidecar alone reproduces the case.
    auto regen = generate_phantom_case(b.seed, b.size, b.recipe, b.patient_id);
    EXPECT_EQ(regen.masks, b.masks);
    EXPECT_EQ(regen.images, a.images);
  }
  fs::remove_all(root);
}

TEST(Png, MaskRoundTripAndErrors) {
  const auto dir = scratch("png");
  SegMask m(5, 7);
  for (size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = static_cast<uint8_t>(i % 8);
  write_mask_png(dir / "m.png", m);
  EXPECT_EQ(read_mask_png(dir / "m.png"), m);
  Image img(3, 4);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i) / 11.f;
  write_image_png16(dir / "i.png", img);
  auto back = read_image_png16(dir / "i.png");
  for (size_t i = 0; i < img.pixels.size(); ++i) EXPECT_LE(std::abs(back.pixels[i] - img.pixels[i]), 1.0 / 65535);
  std::vector<uint8_t> bad(12, 3);
  bad[5] = 9;
  write_gray8_png(dir / "bad.png", 3, 4, bad);
  try {
    read_mask_png(dir / "bad.png");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_mask_png(dir / "junk.png"), IoError);
  EXPECT_THROW(read_mask_png(dir / "missing.png"), IoError);
  fs::remove_all(dir);
}

TEST(Stacks, EdgeReplicationAndCounts) {
  const auto& pc = dataset51().cases[0];
  const int n = pc.n_slices();
  const auto plane = static_cast<size_t>(pc.size * pc.size);
  auto channel = [&](const SliceStack& st, int c) {
    return std::vector<float>(st.data.begin() + c * plane, st.data.begin() + (c + 1) * plane);
  };
  auto first = stack_slices(pc, 0);
  EXPECT_EQ(channel(first, 0), pc.images[0].pixels);
  EXPECT_EQ(channel(first, 1), pc.images[0].pixels);
  EXPECT_EQ(channel(first, 2), pc.images[1].pixels);
  auto mid = stack_slices(pc, 5);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(channel(mid, c), pc.images[4 + c].pixels);
  auto last = stack_slices(pc, n - 1);
  EXPECT_EQ(channel(last, 2), pc.images[n - 1].pixels);
  EXPECT_THROW(stack_slices(pc, n), DimensionError);
  std::vector<const PhantomCase*> one{&pc};
  EXPECT_EQ(enumerate_samples(one).size(), static_cast<size_t>(n));
  auto t = stacks_to_tensor({first, mid});
  EXPECT_EQ(t.shape(), (Shape{2, 3, pc.size, pc.size}));
}

namespace {

SliceStack square_stack(SegMask& mask, int size, int x0, int y0, int side) {
  SliceStack st;
  st.height = st.width = size;
  st.data.assign(static_cast<size_t>(3 * size * size), 0.2f);
  mask = SegMask(size, size);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) {
      mask.at(y, x) = 4;
      for (int c = 0; c < 3; ++c) st.at(c, y, x) = 0.8f;
    }
  return st;
}

}  // namespace

TEST(Augment, IdentityFlipAndQuarterTurn) {
  SegMask m;
  auto st = square_stack(m, 32, 3, 10, 6);
  auto id = augment(st, m, 123, AugmentPolicy::identity());
  EXPECT_EQ(id.first, st);
  EXPECT_EQ(id.second, m);

  GeometricTransform flip;
  flip.flip = true;
  auto f = apply_geometric(st, m, flip);
  EXPECT_NEAR(centroid(f.second, 4).first, 31 - centroid(m, 4).first, 1.0);
  EXPECT_NEAR(centroid(f.second, 4).second, centroid(m, 4).second, 1e-9);

  GeometricTransform rot;
  rot.rotation_deg = 90;
  auto r = apply_geometric(st, m, rot);
  EXPECT_EQ(class_pixel_count(r.second, 4), 36);
  auto r4 = r;
  for (int k = 0; k < 3; ++k) r4 = apply_geometric(r4.first, r4.second, rot);
  EXPECT_EQ(r4.second, m);
}

TEST(Augment, PhotometricClipsAndRandomPolicyKeepsClasses) {
  SegMask m;
  auto st = square_stack(m, 64, 28, 28, 8);
  auto bright = apply_photometric(st, {1.2, 0.5});
  for (float v : bright.data) {
    EXPECT_GE(v, 0.f);
    EXPECT_LE(v, 1.f);
  }
  AugmentPolicy pol;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    auto [x, y] = augment(st, m, seed, pol);
    EXPECT_GT(class_pixel_count(y, 4), 0) << seed;
    for (auto l : y.labels) EXPECT_TRUE(l == 0 || l == 4);
    auto again = augment(st, m, seed, pol);
    EXPECT_EQ(again.first, x);
  }
  AugmentPolicy bad;
  bad.min_crop_area = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Overlay, EmptyMaskLeavesTheGreyImage) {
  // Ground truth used as the prediction on a lesion-free slice.
  auto pc = generate_phantom_case(4, 64, LesionRecipe{30, {}});
  const auto& img = pc.images[10];
  ASSERT_EQ(class_pixel_count(pc.masks[10], 0), 64 * 64);
  const auto rgb = render_overlay(img, pc.masks[10]);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const uint8_t g = to_gray8(img.pixels[i]);
    ASSERT_EQ(rgb[3 * i], g);
    ASSERT_EQ(rgb[3 * i + 1], g);
    ASSERT_EQ(rgb[3 * i + 2], g);
  }
}

TEST(Overlay, PaletteBlend) {
  Image img(1, 3, 0.f);
  SegMask m(1, 3);
  m.labels = {0, 2, 7};
  const auto rgb = render_overlay(img, m, 1.0);
  EXPECT_EQ(std::vector<uint8_t>(rgb.begin(), rgb.end()),
            (std::vector<uint8_t>{0, 0, 0, 0, 0, 255, 255, 165, 0}));
  const auto half = render_overlay(Image(1, 3, 1.f), m, 0.5);
  EXPECT_EQ(half[3], 128);  // 0.5 * 255 + 0.5 * 0, rounded
  EXPECT_EQ(half[5], 255);
  EXPECT_EQ(to_gray8(-1.f), 0);
  EXPECT_EQ(to_gray8(2.f), 255);
  EXPECT_THROW(render_overlay(Image(2, 3), m), DimensionError);
}
