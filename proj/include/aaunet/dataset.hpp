#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aaunet/phantom.hpp"
#include "aaunet/segmask.hpp"
#include "aaunet/tensor.hpp"

namespace aaunet {

inline constexpr int kMinDatasetCases = 7;

struct SplitCounts {
  int train = 0, val = 0, test = 0;
  bool operator==(const SplitCounts&) const = default;
};

/// 78 / 7.5 / 14.5 percent by case count, nearest-integer rounding, at least
/// one case in val and test; train takes the remainder.
SplitCounts split_counts(int n_cases);

struct SliceFiles {
  std::string image;  // relative to the dataset root
  std::string mask;
  bool operator==(const SliceFiles&) const = default;
};

struct ManifestCase {
  std::string patient_id;
  std::string split;  // "train", "val" or "test"
  int n_slices = 0;
  int lesion_free_slices = 0;
  std::vector<SliceFiles> slices;
  bool operator==(const ManifestCase&) const = default;
};

struct DatasetManifest {
  uint64_t generator_seed = 0;
  int size = 0;
  double lesion_free_fraction = 0;  // measured over all slices
  std::vector<ManifestCase> cases;

  SplitCounts counts() const;
  std::vector<std::string> patients_in(const std::string& split) const;
  bool operator==(const DatasetManifest&) const = default;
};

/// Cases plus the manifest describing them (paths filled in even when nothing
/// is written to disk).
struct Dataset {
  DatasetManifest manifest;
  std::vector<PhantomCase> cases;  // same order as manifest.cases

  std::vector<const PhantomCase*> split(const std::string& name) const;
};

using CaseSink = std::function<void(const PhantomCase&, const ManifestCase&)>;

/// Generates `n_cases` phantoms with a patient-level split in which every
/// lesion class appears in every split. Cases are handed to `sink` one at a
/// time, in patient order, so callers can stream them to disk.
///
/// Throws ConfigError for n_cases < 7 or an invalid size, GenerationError when
/// class coverage cannot be met within the retry budget.
DatasetManifest generate_dataset(uint64_t seed, int n_cases, int size, const CaseSink& sink);

/// In-memory convenience wrapper.
Dataset generate_dataset(uint64_t seed, int n_cases, int size);

/// Writes cases/<id>/img_NNN.png, mask_NNN.png, meta.json and manifest.json.
DatasetManifest write_dataset(const std::filesystem::path& root, uint64_t seed, int n_cases,
                              int size);

void save_case(const std::filesystem::path& case_dir, const PhantomCase& pc);
PhantomCase load_case(const std::filesystem::path& case_dir);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads the manifest and every case below `root`.
Dataset load_dataset(const std::filesystem::path& root);

/// Previous, centre and next slice with edge replication.
SliceStack stack_slices(const PhantomCase& pc, int index);

struct SampleRef {
  int case_index = 0;
  int slice = 0;
};

/// Every (case, slice) pair of the given cases.
std::vector<SampleRef> enumerate_samples(const std::vector<const PhantomCase*>& cases);

/// Packs stacks into an N x 3 x H x W tensor.
TensorF stacks_to_tensor(const std::vector<SliceStack>& stacks);

}  // namespace aaunet
