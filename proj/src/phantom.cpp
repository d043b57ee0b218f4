#include "aaunet/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "aaunet/errors.hpp"
#include "aaunet/params.hpp"

namespace aaunet {

namespace {

constexpr double kPi = std::numbers::pi;

// Mean intensities. SDH and EDH share theirs so only shape separates them.
constexpr double kAir = 0.03;
constexpr double kSkull = 0.95;
constexpr double kBrain = 0.45;
constexpr double kCsf = 0.28;
constexpr double kAcuteBlood = 0.80;  // SDH, EDH
constexpr double kIch = 0.78;
constexpr double kSah = 0.74;
constexpr double kCsdh = 0.60;
constexpr double kIvh = 0.76;
constexpr double kNoise = 0.012;

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2 * kPi);
  if (a < 0) a += 2 * kPi;
  return a - kPi;
}

struct Wave {
  double amp, kx, ky, phase, drift;
};

struct HeadGeom {
  double cx, cy, outer_a, outer_b, skull;
  std::array<Wave, 6> waves;
};

struct SliceGeom {
  double cx, cy;
  double a, b;     // inner skull semi-axes
  double ao, bo;   // outer skull semi-axes
  double vent;     // ventricle scale
  double z;        // normalized slice position
};

struct PixelPolar {
  double rho, phi, depth;  // depth: inward distance from the inner skull, pixels
};

HeadGeom draw_head(Rng& rng, int size) {
  const double S = size;
  HeadGeom h;
  h.cx = S / 2 + rng.uniform(-0.02, 0.02) * S;
  h.cy = S / 2 + rng.uniform(-0.02, 0.02) * S;
  h.outer_a = rng.uniform(0.36, 0.40) * S;
  h.outer_b = rng.uniform(0.42, 0.46) * S;
  h.skull = std::max(2.0, rng.uniform(0.025, 0.035) * S);
  for (auto& w : h.waves) {
    w.amp = rng.uniform(0.008, 0.02);
    const double f = rng.uniform(1.0, 4.0) * 2 * kPi / S;
    const double dir = rng.uniform(0, 2 * kPi);
    w.kx = f * std::cos(dir);
    w.ky = f * std::sin(dir);
    w.phase = rng.uniform(0, 2 * kPi);
    w.drift = rng.uniform(-1.5, 1.5);
  }
  return h;
}

SliceGeom slice_geom(const HeadGeom& h, int slice, int n_slices) {
  SliceGeom g;
  g.z = n_slices > 1 ? double(slice) / double(n_slices - 1) : 0.5;
  const double scale = 0.88 + 0.12 * std::sin(kPi * (0.15 + 0.7 * g.z));
  g.cx = h.cx;
  g.cy = h.cy;
  g.ao = h.outer_a * scale;
  g.bo = h.outer_b * scale;
  g.a = g.ao - h.skull;
  g.b = g.bo - h.skull;
  g.vent = 0.6 + 0.4 * std::sin(kPi * g.z);
  return g;
}

PixelPolar polar_of(const SliceGeom& g, double x, double y) {
  const double u = (x - g.cx) / g.a, v = (y - g.cy) / g.b;
  PixelPolar p;
  p.rho = std::hypot(u, v);
  p.phi = std::atan2(v, u);
  const double rloc = std::hypot(g.a * std::cos(p.phi), g.b * std::sin(p.phi));
  p.depth = (1 - p.rho) * rloc;
  return p;
}

struct Point {
  double x, y;
};

Point ellipse_point(const SliceGeom& g, double phi, double rho = 1.0) {
  return {g.cx + rho * g.a * std::cos(phi), g.cy + rho * g.b * std::sin(phi)};
}

std::array<Point, 2> ventricle_centres(const SliceGeom& g, int size) {
  const double S = size;
  return {Point{g.cx - 0.065 * S * g.vent, g.cy - 0.01 * S},
          Point{g.cx + 0.065 * S * g.vent, g.cy - 0.01 * S}};
}

bool in_ventricle(const SliceGeom& g, int size, double x, double y, int which) {
  const double S = size;
  const auto c = ventricle_centres(g, size)[which];
  const double ra = 0.032 * S * g.vent, rb = 0.085 * S * g.vent;
  const double u = (x - c.x) / ra, v = (y - c.y) / rb;
  return u * u + v * v < 1.0;
}

// Pixels painted by one lesion on one slice, with their intensities.
struct Paint {
  std::vector<int64_t> pixels;
  std::vector<float> values;
};

double growth(const LesionSpec& l, int slice) {
  const double t = (slice - l.first_slice + 0.5) / double(l.last_slice - l.first_slice + 1);
  return 0.55 + 0.45 * std::sin(kPi * t);
}

double phase_t(const LesionSpec& l, int slice) {
  return (slice - l.first_slice + 0.5) / double(l.last_slice - l.first_slice + 1);
}

void paint_crescent(const LesionSpec& l, const SliceGeom&, int size, int slice,
                    const std::vector<PixelPolar>& polar, Paint& out) {
  const double S = size, gr = growth(l, slice), t = phase_t(l, slice);
  const bool chronic = l.cls == LesionClass::CSDH;
  const double hw = chronic ? 0.45 + 0.30 * l.size : 0.52 + 0.35 * l.size;
  const double tmax = chronic ? std::max(2.0, (0.035 + 0.02 * l.size) * S * gr)
                              : std::max(1.2, (0.022 + 0.012 * l.size) * S * gr);
  const double centre = l.angle + 0.08 * (t - 0.5);
  Rng tex(mix_seed(l.seed, 7000 + slice));
  const double stripe = 0.024 * S;
  for (int64_t i = 0; i < int64_t(polar.size()); ++i) {
    const auto& p = polar[i];
    if (p.rho >= 1.0 || p.depth < 0) continue;
    const double u = std::abs(wrap_angle(p.phi - centre)) / hw;
    if (u >= 1.0) continue;
    const double taper = std::min(1.0, (1.0 - u) / 0.2);
    if (p.depth >= tmax * taper) continue;
    double v = kAcuteBlood;
    if (chronic) v = kCsdh + 0.06 * std::sin(2 * kPi * p.depth / stripe) + 0.03 * tex.normal();
    out.pixels.push_back(i);
    out.values.push_back(static_cast<float>(v));
  }
}

void paint_lens(const LesionSpec& l, const SliceGeom& g, int size, int slice,
                const std::vector<PixelPolar>& polar, Paint& out) {
  const double S = size, gr = growth(l, slice), t = phase_t(l, slice);
  const double hw = 0.25 + 0.12 * l.size;
  const double bulge = std::max(2.0, (0.035 + 0.025 * l.size) * S * gr);
  const double centre = l.angle + 0.08 * (t - 0.5);
  const Point p1 = ellipse_point(g, centre - hw), p2 = ellipse_point(g, centre + hw);
  const Point mid{(p1.x + p2.x) / 2, (p1.y + p2.y) / 2};
  double nx = g.cx - mid.x, ny = g.cy - mid.y;
  const double nn = std::hypot(nx, ny);
  nx /= nn;
  ny /= nn;
  const Point d{mid.x + bulge * nx, mid.y + bulge * ny};
  // Circumcircle of p1, p2, d.
  const double ax = p1.x, ay = p1.y, bx = p2.x, by = p2.y, cx = d.x, cy = d.y;
  const double den = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
  const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  const double ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / den;
  const double uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / den;
  const double r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy);
  const int64_t W = size;
  for (int64_t i = 0; i < int64_t(polar.size()); ++i) {
    const auto& p = polar[i];
    if (p.rho >= 1.0) continue;
    if (std::abs(wrap_angle(p.phi - centre)) > hw + 0.3) continue;
    const double x = double(i % W), y = double(i / W);
    if ((x - ux) * (x - ux) + (y - uy) * (y - uy) >= r2) continue;
    out.pixels.push_back(i);
    out.values.push_back(static_cast<float>(kAcuteBlood));
  }
}

void paint_ich(const LesionSpec& l, const SliceGeom& g, int size, int slice,
               const std::vector<PixelPolar>& polar, Paint& out) {
  const double S = size, gr = growth(l, slice), t = phase_t(l, slice);
  Rng rng(l.seed);
  const double p1 = rng.uniform(0, 2 * kPi), p2 = rng.uniform(0, 2 * kPi),
               p3 = rng.uniform(0, 2 * kPi);
  const double r = std::max(1.5, (0.045 + 0.04 * l.size) * S * gr);
  const Point c = ellipse_point(g, l.angle + 0.05 * (t - 0.5), l.radial);
  const int64_t W = size;
  for (int64_t i = 0; i < int64_t(polar.size()); ++i) {
    if (polar[i].rho >= 0.92) continue;
    const double dx = double(i % W) - c.x, dy = double(i / W) - c.y;
    const double th = std::atan2(dy, dx);
    const double rt = r * (1 + 0.2 * std::sin(2 * th + p1 + 0.5 * t) +
                           0.12 * std::sin(3 * th + p2) + 0.08 * std::sin(5 * th + p3 - 0.5 * t));
    if (std::hypot(dx, dy) >= rt) continue;
    out.pixels.push_back(i);
    out.values.push_back(static_cast<float>(kIch));
  }
}

void paint_sah(const LesionSpec& l, const SliceGeom&, int size, int slice,
               const std::vector<PixelPolar>& polar, Paint& out) {
  const double S = size, gr = growth(l, slice), t = phase_t(l, slice);
  Rng rng(l.seed);
  const double ph = rng.uniform(0, 2 * kPi);
  const double rho_c = std::clamp(l.radial, 0.55, 0.8);
  const double hw = (0.25 + 0.25 * l.size) * (0.7 + 0.3 * gr);
  const double half_width = std::max(0.75, 0.006 * S * (0.8 + 0.4 * gr));
  const double centre = l.angle + 0.06 * (t - 0.5);
  for (int64_t i = 0; i < int64_t(polar.size()); ++i) {
    const auto& p = polar[i];
    if (p.rho >= 0.95) continue;
    const double dphi = wrap_angle(p.phi - centre);
    if (std::abs(dphi) >= hw) continue;
    const double rloc = p.depth / std::max(1e-9, 1 - p.rho);
    const double rho_curve = rho_c + 0.035 * std::sin(3 * kPi * dphi / hw + ph);
    bool hit = std::abs(p.rho - rho_curve) * rloc < half_width;
    // Short radial sulcus branching inward from the ribbon's middle.
    if (!hit && p.rho < rho_curve && p.rho > rho_curve - 0.12) {
      hit = std::abs(dphi) * p.rho * rloc < half_width;
    }
    if (!hit) continue;
    out.pixels.push_back(i);
    out.values.push_back(static_cast<float>(kSah));
  }
}

void paint_ivh(const LesionSpec& l, const SliceGeom& g, int size, int slice,
               const std::vector<PixelPolar>& polar, Paint& out) {
  const double S = size, gr = growth(l, slice);
  const int which = std::cos(l.angle) >= 0 ? 1 : 0;
  const Point vc = ventricle_centres(g, size)[which];
  const double rb = 0.085 * S * g.vent;
  const double offset = std::clamp((l.radial - 0.5) * 0.1 * S, -0.6 * rb, 0.6 * rb);
  const Point c{vc.x, vc.y + offset};
  const double r = std::max(1.5, (0.025 + 0.02 * l.size) * S * gr);
  const int64_t W = size;
  for (int64_t i = 0; i < int64_t(polar.size()); ++i) {
    const double x = double(i % W), y = double(i / W);
    if (std::hypot(x - c.x, y - c.y) >= r) continue;
    if (!in_ventricle(g, size, x, y, which)) continue;
    out.pixels.push_back(i);
    out.values.push_back(static_cast<float>(kIvh));
  }
}

void paint_pneumo(const LesionSpec& l, const SliceGeom& g, int size, int slice,
                  const std::vector<PixelPolar>& polar, const std::vector<int>& owner,
                  Paint& out) {
  const double t = phase_t(l, slice);
  Rng shape(l.seed);
  const double lo = shape.uniform(kPneumoMinArea512, kPneumoMaxArea512);
  const double hi = shape.uniform(kPneumoMinArea512, kPneumoMaxArea512);
  const int area = pneumo_area_at_size(lo + (hi - lo) * t, size);
  const int speckles = area < 12 ? 1 : (area < 40 ? 2 : 3);
  const int64_t W = size, H = size;
  const double depth0 = std::max(1.5, 0.012 * size);
  std::vector<char> taken(polar.size(), 0);
  Rng grow(mix_seed(l.seed, 9000 + slice));
  int remaining = area;
  for (int s = 0; s < speckles; ++s) {
    const int quota = s == speckles - 1 ? remaining : area / speckles;
    remaining -= quota;
    const double phi = l.angle + 0.08 * s - 0.04 * (speckles - 1);
    const double rloc = std::hypot(g.a * std::cos(phi), g.b * std::sin(phi));
    const Point seed = ellipse_point(g, phi, 1.0 - depth0 / rloc);
    int64_t start = int64_t(std::lround(seed.y)) * W + int64_t(std::lround(seed.x));
    std::vector<int64_t> frontier{start};
    int placed = 0;
    while (placed < quota) {
      if (frontier.empty()) {
        throw GenerationError("pneumocranium growth stalled on slice " + std::to_string(slice));
      }
      const size_t k = static_cast<size_t>(grow.uniform_int(0, int64_t(frontier.size()) - 1));
      const int64_t px = frontier[k];
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(k));
      if (taken[px]) continue;
      if (owner[px] >= 0) {
        throw GenerationError("overlapping exclusive lesions: pneumocranium meets another "
                              "lesion on slice " + std::to_string(slice));
      }
      if (polar[px].rho >= 1.0 || polar[px].depth < 0.5) continue;
      taken[px] = 1;
      ++placed;
      out.pixels.push_back(px);
      out.values.push_back(static_cast<float>(kAir));
      const int64_t y = px / W, x = px % W;
      const int64_t nb[4][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
      for (const auto& d : nb) {
        const int64_t yy = y + d[0], xx = x + d[1];
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        const int64_t q = yy * W + xx;
        if (!taken[q] && owner[q] < 0) frontier.push_back(q);
      }
    }
  }
}

void validate_recipe(const LesionRecipe& r, int n_slices) {
  for (size_t i = 0; i < r.lesions.size(); ++i) {
    const auto& l = r.lesions[i];
    const std::string where = "lesion " + std::to_string(i);
    if (l.cls == LesionClass::Background || static_cast<int>(l.cls) >= kNumClasses) {
      throw ConfigError(where + ": class must be one of the 7 lesion types");
    }
    if (l.first_slice < 0 || l.last_slice >= n_slices || l.first_slice > l.last_slice) {
      throw ConfigError(where + ": slice range [" + std::to_string(l.first_slice) + ", " +
                        std::to_string(l.last_slice) + "] invalid for " +
                        std::to_string(n_slices) + " slices");
    }
    if (l.size < 0 || l.size > 1) throw ConfigError(where + ": size must be in [0, 1]");
  }
}

}  // namespace

int pneumo_area_at_size(double area512, int size) {
  const double scale = double(size) / 512.0;
  const int a = static_cast<int>(std::lround(area512 * scale * scale));
  return std::max(4, a);
}

std::vector<LesionClass> PhantomCase::inventory(int slice) const {
  std::array<bool, kNumClasses> seen{};
  for (uint8_t v : masks.at(slice).labels) seen[v] = true;
  std::vector<LesionClass> out;
  for (int c = 1; c < kNumClasses; ++c) {
    if (seen[c]) out.push_back(static_cast<LesionClass>(c));
  }
  return out;
}

PhantomCase generate_phantom_case(uint64_t seed, int size, const LesionRecipe& recipe,
                                  const std::string& patient_id) {
  if (size < 32 || size % 32 != 0) {
    throw ConfigError("phantom size " + std::to_string(size) +
                      " must be a positive multiple of 32");
  }
  Rng rng(seed);
  const HeadGeom head = draw_head(rng, size);
  int n = recipe.n_slices;
  const int drawn = static_cast<int>(rng.uniform_int(kMinSlices, kMaxSlices));
  if (n == 0) n = drawn;
  if (n < kMinSlices || n > kMaxSlices) {
    throw ConfigError("slice count " + std::to_string(n) + " outside [30, 50]");
  }
  validate_recipe(recipe, n);

  PhantomCase pc;
  pc.patient_id = patient_id;
  pc.seed = seed;
  pc.size = size;
  pc.recipe = recipe;
  pc.recipe.n_slices = n;

  const int64_t S = size;
  std::vector<PixelPolar> polar(static_cast<size_t>(S * S));
  std::vector<int> owner(polar.size());
  for (int s = 0; s < n; ++s) {
    const SliceGeom g = slice_geom(head, s, n);
    for (int64_t y = 0; y < S; ++y) {
      for (int64_t x = 0; x < S; ++x) polar[y * S + x] = polar_of(g, double(x), double(y));
    }
    Image img(S, S);
    for (int64_t y = 0; y < S; ++y) {
      for (int64_t x = 0; x < S; ++x) {
        const double uo = (x - g.cx) / g.ao, vo = (y - g.cy) / g.bo;
        const double rho_out = std::hypot(uo, vo);
        double v = kAir;
        if (polar[y * S + x].rho < 1.0) {
          v = kBrain;
          for (const auto& w : head.waves) {
            v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase + w.drift * g.z);
          }
          if (in_ventricle(g, size, x, y, 0) || in_ventricle(g, size, x, y, 1)) v = kCsf;
        } else if (rho_out < 1.0) {
          v = kSkull;
        }
        img.at(y, x) = static_cast<float>(v);
      }
    }

    SegMask mask(S, S);
    std::fill(owner.begin(), owner.end(), -1);
    // Pneumocranium grows around already-claimed pixels, so paint it last.
    std::vector<size_t> order;
    for (size_t li = 0; li < recipe.lesions.size(); ++li) {
      if (recipe.lesions[li].cls != LesionClass::Pneumocranium) order.push_back(li);
    }
    for (size_t li = 0; li < recipe.lesions.size(); ++li) {
      if (recipe.lesions[li].cls == LesionClass::Pneumocranium) order.push_back(li);
    }
    for (size_t li : order) {
      const auto& l = recipe.lesions[li];
      if (s < l.first_slice || s > l.last_slice) continue;
      Paint paint;
      switch (l.cls) {
        case LesionClass::SDH:
        case LesionClass::CSDH:
          paint_crescent(l, g, size, s, polar, paint);
          break;
        case LesionClass::EDH:
          paint_lens(l, g, size, s, polar, paint);
          break;
        case LesionClass::ICH:
          paint_ich(l, g, size, s, polar, paint);
          break;
        case LesionClass::SAH:
          paint_sah(l, g, size, s, polar, paint);
          break;
        case LesionClass::IVH:
          paint_ivh(l, g, size, s, polar, paint);
          break;
        case LesionClass::Pneumocranium:
          paint_pneumo(l, g, size, s, polar, owner, paint);
          break;
        case LesionClass::Background:
          break;
      }
      if (paint.pixels.empty()) {
        throw GenerationError("lesion " + std::to_string(li) + " (" +
                              std::string(kClassNames[static_cast<int>(l.cls)]) +
                              ") renders no pixels on slice " + std::to_string(s));
      }
      for (size_t k = 0; k < paint.pixels.size(); ++k) {
        const int64_t px = paint.pixels[k];
        if (owner[px] >= 0) {
          throw GenerationError("overlapping exclusive lesions " + std::to_string(owner[px]) +
                                " and " + std::to_string(li) + " on slice " + std::to_string(s));
        }
        owner[px] = static_cast<int>(li);
        mask.labels[px] = static_cast<uint8_t>(l.cls);
        img.pixels[px] = paint.values[k];
      }
    }

    Rng noise(mix_seed(seed, 1000 + s));
    for (auto& v : img.pixels) {
      v = static_cast<float>(std::clamp(v + kNoise * noise.normal(), 0.0, 1.0));
    }
    pc.images.push_back(std::move(img));
    pc.masks.push_back(std::move(mask));
  }
  return pc;
}

LesionRecipe sample_recipe(Rng& rng, int n_slices, const std::vector<LesionClass>& classes,
                           double lesion_fraction) {
  LesionRecipe r;
  r.n_slices = n_slices;
  if (classes.empty()) return r;
  const int band = std::clamp(static_cast<int>(std::lround(lesion_fraction * n_slices)), 1,
                              n_slices);
  const int band_start = static_cast<int>(rng.uniform_int(0, n_slices - band));
  struct Arc {
    double centre, half;
    int first, last;
  };
  std::vector<Arc> used;  // angular intervals at the skull, per slice range
  auto free_angle = [&](const LesionSpec& l, double half) {
    for (const auto& a : used) {
      if (a.last < l.first_slice || l.last_slice < a.first) continue;
      if (std::abs(wrap_angle(l.angle - a.centre)) < half + a.half + 0.1) return false;
    }
    return true;
  };
  for (size_t i = 0; i < classes.size(); ++i) {
    LesionSpec l;
    l.cls = classes[i];
    if (i == 0) {
      l.first_slice = band_start;
      l.last_slice = band_start + band - 1;
    } else {
      const int len = static_cast<int>(rng.uniform_int(std::min(3, band), band));
      l.first_slice = band_start + static_cast<int>(rng.uniform_int(0, band - len));
      l.last_slice = l.first_slice + len - 1;
    }
    l.size = rng.uniform();
    l.seed = rng.next();
    switch (l.cls) {
      case LesionClass::SDH:
      case LesionClass::EDH:
      case LesionClass::CSDH: {
        const double half = l.cls == LesionClass::EDH ? 0.45 : 0.9;
        for (int attempt = 0; attempt < 32; ++attempt) {
          l.angle = wrap_angle((rng.bernoulli(0.5) ? 0.0 : kPi) + rng.uniform(-0.7, 0.7));
          if (free_angle(l, half)) break;
        }
        used.push_back({l.angle, half, l.first_slice, l.last_slice});
        break;
      }
      case LesionClass::Pneumocranium: {
        for (int attempt = 0; attempt < 32; ++attempt) {
          l.angle = wrap_angle(-kPi / 2 + rng.uniform(-0.9, 0.9));
          if (free_angle(l, 0.2)) break;
        }
        used.push_back({l.angle, 0.2, l.first_slice, l.last_slice});
        break;
      }
      case LesionClass::SAH:
        l.angle = rng.uniform(-kPi, kPi);
        l.radial = rng.uniform(0.58, 0.75);
        break;
      case LesionClass::ICH:
        l.angle = rng.uniform(-kPi, kPi);
        l.radial = rng.uniform(0.3, 0.5);
        break;
      case LesionClass::IVH:
        l.angle = rng.uniform(-kPi, kPi);
        l.radial = rng.uniform();
        break;
      case LesionClass::Background:
        break;
    }
    r.lesions.push_back(l);
  }
  return r;
}

int64_t class_pixel_count(const SegMask& mask, uint8_t cls) {
  return std::count(mask.labels.begin(), mask.labels.end(), cls);
}

double convexity_ratio(const SegMask& mask, uint8_t cls) {
  std::vector<std::pair<int64_t, int64_t>> pts;
  for (int64_t y = 0; y < mask.height; ++y) {
    for (int64_t x = 0; x < mask.width; ++x) {
      if (mask.at(y, x) == cls) pts.emplace_back(x, y);
    }
  }
  if (pts.empty()) return 0.0;
  std::sort(pts.begin(), pts.end());
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<int64_t, int64_t>> hull(2 * pts.size());
  size_t k = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 1 ? k - 1 : k);
  if (hull.size() < 3) return 1.0;
  int64_t minx = pts.front().first, maxx = pts.back().first, miny = mask.height, maxy = -1;
  for (const auto& p : pts) {
    miny = std::min(miny, p.second);
    maxy = std::max(maxy, p.second);
  }
  int64_t inside = 0;
  for (int64_t y = miny; y <= maxy; ++y) {
    for (int64_t x = minx; x <= maxx; ++x) {
      bool in = true;
      const std::pair<int64_t, int64_t> q{x, y};
      for (size_t i = 0; i < hull.size() && in; ++i) {
        in = cross(hull[i], hull[(i + 1) % hull.size()], q) >= 0;
      }
      inside += in ? 1 : 0;
    }
  }
  return double(pts.size()) / double(inside);
}

}  // namespace aaunet
