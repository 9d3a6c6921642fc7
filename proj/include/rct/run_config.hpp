#pragma once

// JSON run configuration:
//
//   {
//     "schema": "schema.json" | "synth-std",
//     "data":   {"path": "data.jsonl"} | {"generator": {...} | "synth-std"},
//               plus optional "split": {"train", "val", "test"}, "split_seed",
//               "train_limit"
//     "model":  ModelConfig fields,
//     "train":  TrainConfig fields,
//     "output": "runs/out"
//   }
//
// Unknown keys are rejected at every level. Relative paths are taken as
// given (relative to the working directory).

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "rct/dataset.hpp"
#include "rct/model_config.hpp"
#include "rct/synthgen.hpp"
#include "rct/training.hpp"

namespace rct {

inline constexpr const char* kSynthStd = "synth-std";

struct RunConfig {
  std::string schema = kSynthStd;
  std::string data_path;
  std::optional<GenConfig> generator;
  SplitFractions split;
  std::uint64_t split_seed = 0;
  std::optional<std::size_t> train_limit;
  ModelConfig model;
  TrainConfig train;
  std::string output;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;

  // Checks value ranges and, with check_paths, that referenced files exist.
  void validate(bool check_paths = true) const;

  FeatureSchema load_schema() const;
  // Reads data_path, or runs the generator when no path is given.
  Dataset load_data(const FeatureSchema& schema) const;
};

// The split-related part of a run, stored in checkpoints so that the test
// split can be rebuilt from the raw data.
nlohmann::ordered_json split_to_json(const SplitFractions& f, std::uint64_t seed,
                                     const std::optional<std::size_t>& train_limit);

// "synth-std" or a schema file path.
FeatureSchema resolve_schema(const std::string& schema);

}  // namespace rct
