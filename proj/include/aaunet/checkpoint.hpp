#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aaunet/model.hpp"

namespace aaunet {

inline constexpr uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
  bool operator==(const TensorRecord&) const = default;
};

/// "AAUN", u32 version, u64 header length, JSON header, then records of
/// (u32 name length, name, u32 rank, u64 dims, little-endian f32 payload) to EOF.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();  // must hold "model_config"
  std::vector<TensorRecord> records;

  const TensorRecord* find(const std::string& name) const;
};

/// Written to a temporary sibling and renamed, so an existing file is only
/// replaced by a complete one.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws IoError (with the path) on a missing, truncated or malformed file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Header {"model_config"} plus one record per parameter.
Checkpoint checkpoint_from_model(const Model<float>& model);

/// Rebuilds the model from the header's config and copies every parameter.
/// Throws ConfigError naming the first parameter that is missing, unexpected
/// or of a different shape.
Model<float> model_from_checkpoint(const Checkpoint& ck);

/// Copies the checkpoint's parameter records into an existing model, with the
/// same mismatch checks.
void load_parameters(Model<float>& model, const Checkpoint& ck);

}  // namespace aaunet
