#include "aaunet/config.hpp"

#include <set>

#include "aaunet/errors.hpp"

namespace aaunet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const EncoderConfig& c) {
  return {{"stage_depths", c.stage_depths},       {"base_width", c.base_width},
          {"cardinality", c.cardinality},         {"radix", c.radix},
          {"input_channels", c.input_channels},   {"stem_skip_width", c.stem_skip_width},
          {"deep_stem", c.deep_stem}};
}

json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"decoder_widths", c.decoder_widths},
          {"skip_reduced_widths", c.skip_reduced_widths},
          {"use_space_attention", c.use_space_attention},
          {"use_channel_attention", c.use_channel_attention},
          {"num_classes", c.num_classes},
          {"channel_reduction", c.channel_reduction}};
}

json to_json(const AugmentPolicy& p) {
  return {{"flip_prob", p.flip_prob},         {"max_rotation_deg", p.max_rotation_deg},
          {"min_crop_area", p.min_crop_area}, {"contrast_lo", p.contrast_lo},
          {"contrast_hi", p.contrast_hi},     {"max_brightness", p.max_brightness},
          {"saturation", p.saturation}};
}

json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"lr_base", c.lr_base},
          {"lr_max", c.lr_max},
          {"cycle_length_steps", c.cycle_length_steps},
          {"weight_decay", c.weight_decay},
          {"betas", {c.beta1, c.beta2}},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"augment", to_json(c.augment)},
          {"weight_clip", c.weight_clip},
          {"focal_gamma", c.focal_gamma},
          {"eval_interval", c.eval_interval},
          {"checkpoint_interval", c.checkpoint_interval},
          {"eval_batch", c.eval_batch}};
}

EncoderConfig encoder_config_from_json(const json& j, const EncoderConfig& base) {
  const std::string w = "model.encoder.";
  check_keys(j, w, {"stage_depths", "base_width", "cardinality", "radix", "input_channels",
                    "stem_skip_width", "deep_stem"});
  EncoderConfig c = base;
  read(j, "stage_depths", c.stage_depths, w);
  read(j, "base_width", c.base_width, w);
  read(j, "cardinality", c.cardinality, w);
  read(j, "radix", c.radix, w);
  read(j, "input_channels", c.input_channels, w);
  read(j, "stem_skip_width", c.stem_skip_width, w);
  read(j, "deep_stem", c.deep_stem, w);
  return c;
}

ModelConfig model_config_from_json(const json& j, const ModelConfig& base) {
  const std::string w = "model.";
  check_keys(j, w, {"encoder", "decoder_widths", "skip_reduced_widths", "use_space_attention",
                    "use_channel_attention", "num_classes", "channel_reduction"});
  ModelConfig c = base;
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"), base.encoder);
  read(j, "decoder_widths", c.decoder_widths, w);
  read(j, "skip_reduced_widths", c.skip_reduced_widths, w);
  read(j, "use_space_attention", c.use_space_attention, w);
  read(j, "use_channel_attention", c.use_channel_attention, w);
  read(j, "num_classes", c.num_classes, w);
  read(j, "channel_reduction", c.channel_reduction, w);
  return c;
}

AugmentPolicy augment_policy_from_json(const json& j, const AugmentPolicy& base) {
  const std::string w = "augment.";
  check_keys(j, w, {"flip_prob", "max_rotation_deg", "min_crop_area", "contrast_lo",
                    "contrast_hi", "max_brightness", "saturation", "identity"});
  AugmentPolicy p = base;
  bool identity = false;
  read(j, "identity", identity, w);
  if (identity) p = AugmentPolicy::identity();
  read(j, "flip_prob", p.flip_prob, w);
  read(j, "max_rotation_deg", p.max_rotation_deg, w);
  read(j, "min_crop_area", p.min_crop_area, w);
  read(j, "contrast_lo", p.contrast_lo, w);
  read(j, "contrast_hi", p.contrast_hi, w);
  read(j, "max_brightness", p.max_brightness, w);
  read(j, "saturation", p.saturation, w);
  return p;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  const std::string w;
  check_keys(j, w, {"model", "lr_base", "lr_max", "cycle_length_steps", "weight_decay", "betas",
                    "adam_eps", "batch_size", "max_steps", "seed", "augment", "weight_clip",
                    "focal_gamma", "eval_interval", "checkpoint_interval", "eval_batch"});
  TrainConfig c = base;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"), base.model);
  if (j.contains("augment")) c.augment = augment_policy_from_json(j.at("augment"), base.augment);
  read(j, "lr_base", c.lr_base, w);
  read(j, "lr_max", c.lr_max, w);
  read(j, "cycle_length_steps", c.cycle_length_steps, w);
  read(j, "weight_decay", c.weight_decay, w);
  if (j.contains("betas")) {
    std::vector<double> b;
    read(j, "betas", b, w);
    if (b.size() != 2) throw ConfigError("config key 'betas' must hold two numbers");
    c.beta1 = b[0];
    c.beta2 = b[1];
  }
  read(j, "adam_eps", c.adam_eps, w);
  read(j, "batch_size", c.batch_size, w);
  read(j, "max_steps", c.max_steps, w);
  read(j, "seed", c.seed, w);
  read(j, "weight_clip", c.weight_clip, w);
  read(j, "focal_gamma", c.focal_gamma, w);
  read(j, "eval_interval", c.eval_interval, w);
  read(j, "checkpoint_interval", c.checkpoint_interval, w);
  read(j, "eval_batch", c.eval_batch, w);
  return c;
}

void TrainConfig::validate() const {
  model.validate();
  augment.validate();
  if (!(lr_base > 0) || !(lr_max >= lr_base)) {
    throw ConfigError("learning rates must satisfy 0 < lr_base <= lr_max");
  }
  if (cycle_length_steps < 2) throw ConfigError("cycle_length_steps must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (!(weight_clip >= 1)) throw ConfigError("weight_clip must be >= 1");
  if (!(focal_gamma >= 0)) throw ConfigError("focal_gamma must be >= 0");
  if (eval_interval < 0 || checkpoint_interval < 0) {
    throw ConfigError("eval_interval and checkpoint_interval must be >= 0");
  }
  if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
}

}  // namespace aaunet
