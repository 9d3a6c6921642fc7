#pragma once

// L1 training with Adam and plateau learning-rate decay, and the MAE%
// evaluation metric.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rct/dataset.hpp"
#include "rct/model.hpp"

namespace rct {

struct TrainConfig {
  int batch_size = 256;
  double lr = 1e-3;
  double plateau_factor = 0.7;
  int plateau_patience = 3;
  double min_rel_improvement = 1e-3;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  int eval_every = 200;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // Batch 2048, lr 1e-4.
  static TrainConfig full_scale();

  bool operator==(const TrainConfig&) const = default;
};

// 100 * sum |C - C_hat| / sum |C - C^A|.
double mae_percent(std::span<const double> predictions, std::span<const double> actuals,
                   std::span<const double> heuristics);

// Bias-corrected Adam over every parameter of a store.
template <typename T>
class Adam {
 public:
  explicit Adam(ParameterStore<T>& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the gradients currently held by the parameters.
  void step();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return t_; }
  const Tensor<T>& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor<T>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterStore<T>& params_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// Multiplies the learning rate by `factor` after `patience` consecutive
// evaluations without a relative improvement of at least `min_rel` over the
// best value seen.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience, double min_rel);

  // Returns the learning rate to use after observing `metric`.
  double observe(double metric, double lr);
  double best() const { return best_; }

 private:
  double factor_;
  int patience_;
  double min_rel_;
  double best_;
  int bad_ = 0;
};

struct HistoryRow {
  std::uint64_t step = 0;
  double train_loss = 0.0;  // mean L1 in standardized units since the last evaluation
  double val_mae_percent = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  double best_val_mae_percent = 0.0;
  std::uint64_t best_step = 0;
  std::uint64_t steps = 0;
};

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history);
void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

// Cost predictions in currency units. The dataset must be encoded with the
// model's preprocessing state.
template <typename T>
std::vector<double> predict_costs(const Regressor<T>& model, const Dataset& ds, std::size_t batch_size = 512);

template <typename T>
double evaluate_mae_percent(const Regressor<T>& model, const Dataset& ds);

using EvalCallback = std::function<void(const HistoryRow&)>;

// Mini-batch L1 training on standardized costs. Evaluates validation MAE%
// every eval_every steps and after the final step, and leaves the model at
// the parameters of the best evaluation. Throws NumericError on a non-finite
// loss.
TrainResult train(Regressor<float>& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                  const EvalCallback& on_eval = {});

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace rct
