#pragma once

// Single-file binary checkpoints.
//
// Layout (little-endian):
//   "RCTCKPT\0" | u32 version | u64 n + n bytes of JSON header
//   | u32 tensor count | per tensor: u32 n + name, u8 dtype, i64 rows, i64 cols, raw data
//   | "RCTEND\0\0"
// The header holds the model config, feature schema, preprocessing state and
// a caller-supplied "run" object; it carries no timestamps so identical
// models produce identical files.

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "rct/model.hpp"

namespace rct {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  std::unique_ptr<Regressor<float>> model;
  nlohmann::json run;
};

// Writes to a temporary file next to `path` and renames it into place.
void save_checkpoint(const Regressor<float>& model, const std::string& path,
                     const nlohmann::ordered_json& run = nlohmann::ordered_json::object());

// Throws ParseError on a malformed or truncated file, CompatibilityError on a
// version mismatch or (when `expected` is given) a different feature schema.
// No model is returned unless the whole file was read.
LoadedCheckpoint load_checkpoint(const std::string& path, const std::optional<FeatureSchema>& expected = std::nullopt);

}  // namespace rct
