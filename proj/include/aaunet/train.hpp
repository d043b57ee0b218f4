#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aaunet/checkpoint.hpp"
#include "aaunet/config.hpp"
#include "aaunet/dataset.hpp"
#include "aaunet/metrics.hpp"
#include "aaunet/optim.hpp"

namespace aaunet {

struct StepRecord {
  int64_t step = 0;  // 1-based
  double lr = 0;
  double loss = 0;
};

/// Training loop: cyclic-lr AdamW on class-weighted focal loss.
///
/// Batch composition and augmentation at step k depend only on (seed, k), so a
/// run resumed from a checkpoint continues exactly as an uninterrupted one.
/// With a non-empty out_dir the trainer appends JSON lines to metrics.jsonl and
/// keeps best.ckpt (by validation mean Dice) and last.ckpt there.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<const PhantomCase*> train,
          std::vector<const PhantomCase*> val, std::filesystem::path out_dir = {});

  /// Restores model, optimizer state, step and best score from a checkpoint
  /// written by save_checkpoint().
  static Trainer resume(const std::filesystem::path& checkpoint,
                        std::vector<const PhantomCase*> train,
                        std::vector<const PhantomCase*> val, std::filesystem::path out_dir = {});

  /// One optimization step; returns its loss. On a non-finite loss the current
  /// (last good) state is written to last.ckpt and NumericError is thrown.
  double step();

  /// Steps until `steps_done() == until` (capped by max_steps).
  void run_until(int64_t until);

  /// run_until(max_steps), then saves last.ckpt.
  void run();

  /// Validation report, updating the best score and best.ckpt.
  std::optional<DiceReport> validate();

  int64_t steps_done() const { return steps_done_; }
  const TrainConfig& config() const { return cfg_; }
  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  const ClassWeights& class_weights() const { return weights_; }
  const std::vector<StepRecord>& history() const { return history_; }
  std::optional<double> best_val_dice() const { return best_; }

  /// Model with the best validation parameters seen so far (the current model
  /// if validation never ran).
  Model<float> best_model() const;

  Checkpoint make_checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;

 private:
  void log(const nlohmann::json& record) const;

  TrainConfig cfg_;
  std::vector<const PhantomCase*> train_, val_;
  std::vector<SampleRef> samples_;
  std::filesystem::path out_dir_;
  Model<float> model_;
  AdamW<float> opt_;
  ClassWeights weights_;
  int64_t steps_done_ = 0;
  std::optional<double> best_;
  std::vector<std::vector<float>> best_values_;
  std::vector<StepRecord> history_;
};

/// Published per-class Dice rows for the four variants (ICH..IVH order),
/// obtained on private data; carried for side-by-side display only.
struct ReferenceRow {
  const char* variant;
  std::array<double, kNumLesionClasses> dice;
};
const std::vector<ReferenceRow>& reference_rows();
inline constexpr const char* kReferenceLabel = "published (private data, not reproducible)";

struct AblationRow {
  std::string variant;
  DiceReport test_report;
  int64_t steps = 0;
  double seconds = 0;
};

/// The four (space, channel) attention settings as configs derived from `base`.
std::vector<ModelConfig> ablation_variants(const ModelConfig& base);

/// Trains every variant under the same seed and budget, evaluates the test
/// split with the best-validation parameters and, when out_dir is set, writes
/// ablation.json and ablation.md (plus one training sub-directory per variant).
std::vector<AblationRow> run_ablation(const Dataset& data, const TrainConfig& base,
                                      const std::filesystem::path& out_dir,
                                      const std::vector<ModelConfig>& variants = {});

nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
std::string ablation_markdown(const std::vector<AblationRow>& rows);

}  // namespace aaunet
