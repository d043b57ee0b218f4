#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aaunet/model.hpp"
#include "aaunet/phantom.hpp"
#include "aaunet/segmask.hpp"
#include "aaunet/tensor.hpp"

namespace aaunet {

using ClassWeights = std::vector<double>;

/// Class-weighted focal loss averaged over every pixel of the batch.
/// logits: N x K x H x W; targets: N masks of H x W. Throws DataError naming
/// the first pixel whose class is >= K, ConfigError for gamma < 0 or a weight
/// vector of the wrong length.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const SegMask> targets,
                     const ClassWeights& weights, double gamma);

/// Per-class pixel counts; merge() combines disjoint shards.
struct DiceCounts {
  std::array<int64_t, kNumClasses> intersection{};
  std::array<int64_t, kNumClasses> predicted{};
  std::array<int64_t, kNumClasses> truth{};

  void add(const SegMask& pred, const SegMask& truth_mask);
  void merge(const DiceCounts& other);
  /// 2|P n G| / (|P| + |G|); nullopt when both are empty.
  std::optional<double> dice(int cls) const;
  bool operator==(const DiceCounts&) const = default;
};

/// Dice of one class between two masks. Throws DimensionError on a size mismatch.
std::optional<double> dice_score(const SegMask& pred, const SegMask& truth, int cls);

struct DiceReport {
  DiceCounts counts;
  std::array<std::optional<double>, kNumClasses> per_class{};  // index 0 unused
  std::optional<double> mean_dice;  // over defined lesion classes
  nlohmann::json config_echo = nlohmann::json::object();

  static DiceReport from_counts(const DiceCounts& c);
  /// Mean over a subset of lesion classes, ignoring undefined ones.
  std::optional<double> mean_over(std::span<const LesionClass> classes) const;
  nlohmann::json to_json() const;
};

using Predictor = std::function<SegMask(const PhantomCase&, int slice)>;

/// Throws ConfigError on an empty split.
DiceReport evaluate(const Predictor& predict, const std::vector<const PhantomCase*>& cases);
DiceReport evaluate(const Model<float>& model, const std::vector<const PhantomCase*>& cases,
                    int batch_size = 8);

/// w_c = median(present freq) / freq_c, clipped to [1/clip, clip]; classes with
/// zero frequency get `clip`.
ClassWeights weights_from_frequencies(const std::vector<double>& freq, double clip);
ClassWeights inverse_frequency_weights(const std::vector<const PhantomCase*>& cases,
                                       double clip);

}  // namespace aaunet
