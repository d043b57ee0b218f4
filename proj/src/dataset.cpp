#include "aaunet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <optional>
#include <set>

#include "aaunet/errors.hpp"
#include "aaunet/params.hpp"
#include "aaunet/png_io.hpp"

namespace aaunet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kRecipeAttempts = 40;
constexpr double kMeanLesionFraction = 1.0 - kTargetLesionFreeFraction;

std::string slice_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d.png", prefix, i);
  return buf;
}

std::string patient_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%03d", i);
  return buf;
}

LesionClass class_from_name(const std::string& name) {
  for (int c = 1; c < kNumClasses; ++c) {
    if (kClassNames[c] == name) return static_cast<LesionClass>(c);
  }
  throw DataError("unknown lesion class '" + name + "'");
}

json recipe_to_json(const LesionRecipe& r) {
  json lesions = json::array();
  for (const auto& l : r.lesions) {
    lesions.push_back({{"class", std::string(kClassNames[static_cast<int>(l.cls)])},
                       {"first_slice", l.first_slice},
                       {"last_slice", l.last_slice},
                       {"angle", l.angle},
                       {"radial", l.radial},
                       {"size", l.size},
                       {"seed", l.seed}});
  }
  return {{"n_slices", r.n_slices}, {"lesions", lesions}};
}

LesionRecipe recipe_from_json(const json& j) {
  LesionRecipe r;
  r.n_slices = j.at("n_slices").get<int>();
  for (const auto& lj : j.at("lesions")) {
    LesionSpec l;
    l.cls = class_from_name(lj.at("class").get<std::string>());
    l.first_slice = lj.at("first_slice").get<int>();
    l.last_slice = lj.at("last_slice").get<int>();
    l.angle = lj.at("angle").get<double>();
    l.radial = lj.at("radial").get<double>();
    l.size = lj.at("size").get<double>();
    l.seed = lj.at("seed").get<uint64_t>();
    r.lesions.push_back(l);
  }
  return r;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

int lesion_free_count(const PhantomCase& pc) {
  int n = 0;
  for (const auto& m : pc.masks) {
    if (std::all_of(m.labels.begin(), m.labels.end(), [](uint8_t v) { return v == 0; })) ++n;
  }
  return n;
}

// Spreads the seven lesion classes over a split so each appears at least once,
// then tops every case up to two or three classes.
std::vector<std::vector<LesionClass>> assign_classes(Rng& rng, int m) {
  static constexpr LesionClass order[] = {
      LesionClass::SDH, LesionClass::EDH, LesionClass::CSDH, LesionClass::ICH,
      LesionClass::SAH, LesionClass::IVH, LesionClass::Pneumocranium};
  std::vector<std::vector<LesionClass>> out(static_cast<size_t>(m));
  const int offset = static_cast<int>(rng.uniform_int(0, m - 1));
  for (int i = 0; i < 7; ++i) out[static_cast<size_t>((i + offset) % m)].push_back(order[i]);
  for (auto& classes : out) {
    const size_t want = rng.bernoulli(0.3) ? 3 : 2;
    while (classes.size() < want) {
      const auto c = static_cast<LesionClass>(rng.uniform_int(1, kNumLesionClasses));
      if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
    }
  }
  return out;
}

}  // namespace

SplitCounts split_counts(int n_cases) {
  SplitCounts s;
  s.val = std::max(1, static_cast<int>(std::lround(0.075 * n_cases)));
  s.test = std::max(1, static_cast<int>(std::lround(0.145 * n_cases)));
  s.train = n_cases - s.val - s.test;
  return s;
}

SplitCounts DatasetManifest::counts() const {
  SplitCounts s;
  for (const auto& c : cases) {
    if (c.split == "train") ++s.train;
    if (c.split == "val") ++s.val;
    if (c.split == "test") ++s.test;
  }
  return s;
}

std::vector<std::string> DatasetManifest::patients_in(const std::string& split) const {
  std::vector<std::string> out;
  for (const auto& c : cases) {
    if (c.split == split) out.push_back(c.patient_id);
  }
  return out;
}

std::vector<const PhantomCase*> Dataset::split(const std::string& name) const {
  std::vector<const PhantomCase*> out;
  for (size_t i = 0; i < cases.size(); ++i) {
    if (manifest.cases[i].split == name) out.push_back(&cases[i]);
  }
  return out;
}

DatasetManifest generate_dataset(uint64_t seed, int n_cases, int size, const CaseSink& sink) {
  if (n_cases < kMinDatasetCases) {
    throw ConfigError("n_cases must be at least " + std::to_string(kMinDatasetCases) +
                      " so every lesion class can appear in every split, got " +
                      std::to_string(n_cases));
  }
  if (size < 32 || size % 32 != 0) {
    throw ConfigError("size must be a positive multiple of 32, got " + std::to_string(size));
  }
  const SplitCounts counts = split_counts(n_cases);
  if (counts.train < 1) throw ConfigError("no training cases left after the split");

  Rng plan(mix_seed(seed, 0x5b1d));
  std::vector<int> perm(static_cast<size_t>(n_cases));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n_cases - 1; i > 0; --i) {
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(plan.uniform_int(0, i))]);
  }
  std::vector<std::string> split_of(static_cast<size_t>(n_cases));
  std::vector<std::vector<LesionClass>> classes_of(static_cast<size_t>(n_cases));
  const std::pair<const char*, int> splits[] = {
      {"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  size_t next = 0;
  for (const auto& [name, m] : splits) {
    auto assigned = assign_classes(plan, m);
    for (int k = 0; k < m; ++k, ++next) {
      split_of[static_cast<size_t>(perm[next])] = name;
      classes_of[static_cast<size_t>(perm[next])] = std::move(assigned[static_cast<size_t>(k)]);
    }
  }

  DatasetManifest manifest;
  manifest.generator_seed = seed;
  manifest.size = size;
  int64_t total_slices = 0, free_slices = 0;
  std::map<std::string, std::set<int>> seen;
  for (int i = 0; i < n_cases; ++i) {
    const uint64_t case_seed = mix_seed(seed, static_cast<uint64_t>(i) + 1);
    Rng shape_rng(case_seed);
    const int n_slices = static_cast<int>(shape_rng.uniform_int(kMinSlices, kMaxSlices));
    std::optional<PhantomCase> pc;
    std::string last_error;
    for (int attempt = 0; attempt < kRecipeAttempts && !pc; ++attempt) {
      Rng rng(mix_seed(case_seed, 0x1000 + static_cast<uint64_t>(attempt)));
      const double fraction = kMeanLesionFraction + rng.uniform(-0.04, 0.04);
      LesionRecipe recipe = sample_recipe(rng, n_slices, classes_of[static_cast<size_t>(i)], fraction);
      try {
        pc = generate_phantom_case(rng.next(), size, recipe, patient_name(i));
      } catch (const GenerationError& e) {
        last_error = e.what();
      }
    }
    if (!pc) {
      throw GenerationError("class coverage failure: case " + patient_name(i) + " could not be "
                            "generated in " + std::to_string(kRecipeAttempts) +
                            " attempts (last: " + last_error + ")");
    }
    ManifestCase mc;
    mc.patient_id = pc->patient_id;
    mc.split = split_of[static_cast<size_t>(i)];
    mc.n_slices = pc->n_slices();
    mc.lesion_free_slices = lesion_free_count(*pc);
    for (int s = 0; s < mc.n_slices; ++s) {
      const std::string dir = "cases/" + mc.patient_id + "/";
      mc.slices.push_back({dir + slice_name("img", s), dir + slice_name("mask", s)});
      for (auto c : pc->inventory(s)) seen[mc.split].insert(static_cast<int>(c));
    }
    total_slices += mc.n_slices;
    free_slices += mc.lesion_free_slices;
    if (sink) sink(*pc, mc);
    manifest.cases.push_back(std::move(mc));
  }
  for (const auto& [name, m] : splits) {
    (void)m;
    if (seen[name].size() != static_cast<size_t>(kNumLesionClasses)) {
      throw GenerationError(std::string("class coverage failure in split ") + name);
    }
  }
  manifest.lesion_free_fraction = double(free_slices) / double(total_slices);
  return manifest;
}

Dataset generate_dataset(uint64_t seed, int n_cases, int size) {
  Dataset ds;
  ds.manifest = generate_dataset(seed, n_cases, size,
                                 [&](const PhantomCase& pc, const ManifestCase&) {
                                   ds.cases.push_back(pc);
                                 });
  return ds;
}

DatasetManifest write_dataset(const fs::path& root, uint64_t seed, int n_cases, int size) {
  std::error_code ec;
  fs::create_directories(root / "cases", ec);
  if (ec) throw IoError("cannot create " + (root / "cases").string() + ": " + ec.message());
  DatasetManifest m = generate_dataset(seed, n_cases, size,
                                       [&](const PhantomCase& pc, const ManifestCase&) {
                                         save_case(root / "cases" / pc.patient_id, pc);
                                       });
  save_manifest(root / "manifest.json", m);
  return m;
}

void save_case(const fs::path& dir, const PhantomCase& pc) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json order = json::array();
  for (int s = 0; s < pc.n_slices(); ++s) {
    write_image_png16(dir / slice_name("img", s), pc.images[static_cast<size_t>(s)]);
    write_mask_png(dir / slice_name("mask", s), pc.masks[static_cast<size_t>(s)]);
    order.push_back({{"index", s}, {"image", slice_name("img", s)}, {"mask", slice_name("mask", s)}});
  }
  json meta = {{"patient_id", pc.patient_id},
               {"generator_seed", pc.seed},
               {"size", pc.size},
               {"recipe", recipe_to_json(pc.recipe)},
               {"slices", order}};
  write_json(dir / "meta.json", meta);
}

PhantomCase load_case(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  PhantomCase pc;
  try {
    pc.patient_id = meta.at("patient_id").get<std::string>();
    pc.seed = meta.at("generator_seed").get<uint64_t>();
    pc.size = meta.at("size").get<int>();
    pc.recipe = recipe_from_json(meta.at("recipe"));
    for (const auto& sj : meta.at("slices")) {
      pc.images.push_back(read_image_png16(dir / sj.at("image").get<std::string>()));
      pc.masks.push_back(read_mask_png(dir / sj.at("mask").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed case metadata in " + (dir / "meta.json").string() + ": " + e.what());
  }
  for (size_t s = 0; s < pc.images.size(); ++s) {
    if (pc.images[s].height != pc.size || pc.images[s].width != pc.size ||
        pc.masks[s].height != pc.size || pc.masks[s].width != pc.size) {
      throw DataError("slice " + std::to_string(s) + " of " + dir.string() +
                      " does not match the declared size " + std::to_string(pc.size));
    }
  }
  return pc;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  const SplitCounts c = m.counts();
  json cases = json::array();
  for (const auto& mc : m.cases) {
    json slices = json::array();
    for (const auto& s : mc.slices) slices.push_back({{"image", s.image}, {"mask", s.mask}});
    cases.push_back({{"patient_id", mc.patient_id},
                     {"split", mc.split},
                     {"n_slices", mc.n_slices},
                     {"lesion_free_slices", mc.lesion_free_slices},
                     {"slices", slices}});
  }
  json j = {{"generator_seed", m.generator_seed},
            {"size", m.size},
            {"n_cases", m.cases.size()},
            {"lesion_free_fraction", m.lesion_free_fraction},
            {"split_counts", {{"train", c.train}, {"val", c.val}, {"test", c.test}}},
            {"cases", cases}};
  write_json(path, j);
}

DatasetManifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  DatasetManifest m;
  try {
    m.generator_seed = j.at("generator_seed").get<uint64_t>();
    m.size = j.at("size").get<int>();
    m.lesion_free_fraction = j.at("lesion_free_fraction").get<double>();
    for (const auto& cj : j.at("cases")) {
      ManifestCase mc;
      mc.patient_id = cj.at("patient_id").get<std::string>();
      mc.split = cj.at("split").get<std::string>();
      mc.n_slices = cj.at("n_slices").get<int>();
      mc.lesion_free_slices = cj.at("lesion_free_slices").get<int>();
      for (const auto& sj : cj.at("slices")) {
        mc.slices.push_back({sj.at("image").get<std::string>(), sj.at("mask").get<std::string>()});
      }
      if (mc.split != "train" && mc.split != "val" && mc.split != "test") {
        throw DataError("case " + mc.patient_id + " has unknown split '" + mc.split + "' in " +
                        path.string());
      }
      m.cases.push_back(std::move(mc));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = load_manifest(root / "manifest.json");
  for (const auto& mc : ds.manifest.cases) {
    PhantomCase pc;
    pc.patient_id = mc.patient_id;
    pc.size = ds.manifest.size;
    const fs::path meta = root / "cases" / mc.patient_id / "meta.json";
    if (fs::exists(meta)) {
      pc = load_case(meta.parent_path());
    } else {
      for (const auto& s : mc.slices) {
        pc.images.push_back(read_image_png16(root / s.image));
        pc.masks.push_back(read_mask_png(root / s.mask));
      }
    }
    if (pc.n_slices() != mc.n_slices) {
      throw DataError("case " + mc.patient_id + " has " + std::to_string(pc.n_slices()) +
                      " slices on disk, manifest says " + std::to_string(mc.n_slices));
    }
    ds.cases.push_back(std::move(pc));
  }
  return ds;
}

SliceStack stack_slices(const PhantomCase& pc, int index) {
  const int n = pc.n_slices();
  if (index < 0 || index >= n) {
    throw DimensionError("slice index " + std::to_string(index) + " outside [0, " +
                         std::to_string(n) + ")");
  }
  const auto& centre = pc.images[static_cast<size_t>(index)];
  SliceStack st;
  st.height = centre.height;
  st.width = centre.width;
  st.data.reserve(centre.pixels.size() * 3);
  for (int d = -1; d <= 1; ++d) {
    const int k = std::clamp(index + d, 0, n - 1);
    const auto& px = pc.images[static_cast<size_t>(k)].pixels;
    st.data.insert(st.data.end(), px.begin(), px.end());
  }
  return st;
}

std::vector<SampleRef> enumerate_samples(const std::vector<const PhantomCase*>& cases) {
  std::vector<SampleRef> out;
  for (size_t c = 0; c < cases.size(); ++c) {
    for (int s = 0; s < cases[c]->n_slices(); ++s) out.push_back({static_cast<int>(c), s});
  }
  return out;
}

TensorF stacks_to_tensor(const std::vector<SliceStack>& stacks) {
  if (stacks.empty()) throw DimensionError("stacks_to_tensor: empty batch");
  const int64_t H = stacks[0].height, W = stacks[0].width;
  std::vector<float> v;
  v.reserve(stacks.size() * 3 * H * W);
  for (const auto& s : stacks) {
    if (s.height != H || s.width != W) {
      throw DimensionError("stacks_to_tensor: mixed sizes in one batch");
    }
    v.insert(v.end(), s.data.begin(), s.data.end());
  }
  return TensorF({static_cast<int64_t>(stacks.size()), 3, H, W}, std::move(v));
}

}  // namespace aaunet
