#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "aaunet/augment.hpp"
#include "aaunet/model.hpp"

namespace aaunet {

struct TrainConfig {
  ModelConfig model;
  double lr_base = 1e-4;
  double lr_max = 1e-3;
  int64_t cycle_length_steps = 500;
  double weight_decay = 1e-2;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int64_t max_steps = 2000;
  uint64_t seed = 0;
  AugmentPolicy augment;
  double weight_clip = 10.0;
  double focal_gamma = 2.0;
  int64_t eval_interval = 250;   // 0 disables periodic validation
  int64_t checkpoint_interval = 0;  // 0: only best and last
  int eval_batch = 8;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Serialization. Readers start from defaults, so partial objects are fine, and
// reject any key they do not know with ConfigError naming it.
nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const AugmentPolicy& p);
nlohmann::json to_json(const TrainConfig& c);

EncoderConfig encoder_config_from_json(const nlohmann::json& j, const EncoderConfig& base = {});
ModelConfig model_config_from_json(const nlohmann::json& j, const ModelConfig& base = {});
AugmentPolicy augment_policy_from_json(const nlohmann::json& j, const AugmentPolicy& base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

}  // namespace aaunet
