#include "rct/experiment.hpp"

#include <chrono>

#include "rct/errors.hpp"

namespace rct {

PreparedData prepare_data(const Dataset& raw, const SplitFractions& fractions, std::uint64_t split_seed,
                          std::optional<std::size_t> train_limit) {
  if (raw.encoded()) throw StateError("prepare_data expects raw (unencoded) records");
  DatasetSplit split = split_dataset(raw, fractions, split_seed);
  if (train_limit) {
    if (*train_limit == 0 || *train_limit > split.train.size()) {
      throw ValidationError("training size " + std::to_string(*train_limit) + " outside [1, " +
                            std::to_string(split.train.size()) + "]");
    }
    split.train = head(split.train, *train_limit);
  }
  auto state = std::make_shared<const PreprocessState>(fit_preprocess(split.train));
  PreparedData out;
  out.preprocess = state;
  out.split.train = apply_preprocess(split.train, state);
  out.split.val = apply_preprocess(split.val, state);
  out.split.test = apply_preprocess(split.test, state);
  return out;
}

RunOutcome run_experiment(const PreparedData& data, const ModelConfig& model, const TrainConfig& train,
                          const EvalCallback& on_eval) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  out.model = build_model<float>(data.split.train.schema, model, data.preprocess, train.seed);
  out.train = rct::train(*out.model, data.split.train, data.split.val, train, on_eval);
  out.test_mae_percent = evaluate_mae_percent(*out.model, data.split.test);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace rct
