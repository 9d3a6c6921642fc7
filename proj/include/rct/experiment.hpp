#pragma once

// One train/evaluate run over a split dataset, shared by the CLI, sweeps and
// the acceptance suite.

#include <cstdint>
#include <memory>
#include <optional>

#include "rct/dataset.hpp"
#include "rct/model.hpp"
#include "rct/preprocess.hpp"
#include "rct/training.hpp"

namespace rct {

// Splits carry the preprocessing fit on the training split.
struct PreparedData {
  std::shared_ptr<const PreprocessState> preprocess;
  DatasetSplit split;
};

// Splits raw data with `split_seed`, optionally keeps only the first
// `train_limit` training records, fits preprocessing on the (possibly
// reduced) training split and applies it to all three splits.
PreparedData prepare_data(const Dataset& raw, const SplitFractions& fractions, std::uint64_t split_seed,
                          std::optional<std::size_t> train_limit = std::nullopt);

struct RunOutcome {
  std::unique_ptr<Regressor<float>> model;
  TrainResult train;
  double test_mae_percent = 0.0;
  double wall_seconds = 0.0;
};

// Builds the model with train.seed, trains it and scores the test split.
RunOutcome run_experiment(const PreparedData& data, const ModelConfig& model, const TrainConfig& train,
                          const EvalCallback& on_eval = {});

}  // namespace rct
