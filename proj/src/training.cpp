#include "rct/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "rct/errors.hpp"

namespace rct {

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ValidationError("train.batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("train.lr must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ValidationError("train.plateau_factor must be in (0, 1)");
  if (plateau_patience <= 0) throw ValidationError("train.plateau_patience must be positive");
  if (!(min_rel_improvement >= 0.0 && min_rel_improvement < 1.0)) {
    throw ValidationError("train.min_rel_improvement must be in [0, 1)");
  }
  if (max_epochs <= 0) throw ValidationError("train.max_epochs must be positive");
  if (eval_every <= 0) throw ValidationError("train.eval_every must be positive");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["plateau_factor"] = plateau_factor;
  j["plateau_patience"] = plateau_patience;
  j["min_rel_improvement"] = min_rel_improvement;
  j["max_epochs"] = max_epochs;
  j["seed"] = seed;
  j["eval_every"] = eval_every;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") {
        c.batch_size = value.get<int>();
      } else if (key == "lr") {
        c.lr = value.get<double>();
      } else if (key == "plateau_factor") {
        c.plateau_factor = value.get<double>();
      } else if (key == "plateau_patience") {
        c.plateau_patience = value.get<int>();
      } else if (key == "min_rel_improvement") {
        c.min_rel_improvement = value.get<double>();
      } else if (key == "max_epochs") {
        c.max_epochs = value.get<int>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "eval_every") {
        c.eval_every = value.get<int>();
      } else {
        throw ValidationError("unknown key 'train." + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.batch_size = 2048;
  c.lr = 1e-4;
  return c;
}

double mae_percent(std::span<const double> predictions, std::span<const double> actuals,
                   std::span<const double> heuristics) {
  if (predictions.size() != actuals.size() || heuristics.size() != actuals.size()) {
    throw ShapeError("mae_percent: length mismatch (" + std::to_string(predictions.size()) + ", " +
                     std::to_string(actuals.size()) + ", " + std::to_string(heuristics.size()) + ")");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    num += std::abs(actuals[i] - predictions[i]);
    den += std::abs(actuals[i] - heuristics[i]);
  }
  if (!(den > 0.0)) throw ValidationError("heuristic is exact; MAE% undefined");
  return num / den * 100.0;
}

template <typename T>
Adam<T>::Adam(ParameterStore<T>& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& v = params[i].value;
    m_.push_back(Tensor<T>::Zero(v.rows(), v.cols()));
    v_.push_back(Tensor<T>::Zero(v.rows(), v.cols()));
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<T>& p = params_[i];
    auto g = p.grad.array();
    m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

PlateauScheduler::PlateauScheduler(double factor, int patience, double min_rel)
    : factor_(factor), patience_(patience), min_rel_(min_rel), best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::observe(double metric, double lr) {
  if (metric < best_ * (1.0 - min_rel_)) {
    best_ = metric;
    bad_ = 0;
    return lr;
  }
  if (++bad_ >= patience_) {
    bad_ = 0;
    return lr * factor_;
  }
  return lr;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
  out << "step,train_loss,val_mae_percent,lr\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(r.step), r.train_loss,
                  r.val_mae_percent, r.lr);
    out << buf;
  }
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_history_csv(out, history);
  if (!out) throw std::runtime_error("failed writing " + path);
}

namespace {

template <typename T>
void require_compatible(const Regressor<T>& model, const Dataset& ds) {
  if (!ds.encoded()) throw StateError("dataset is not preprocessed; apply the model's preprocessing first");
  if (!(ds.schema == model.schema())) throw CompatibilityError("dataset schema differs from the model schema");
  if (model.preprocess() && ds.preprocessing != model.preprocess() && !(*ds.preprocessing == *model.preprocess())) {
    throw CompatibilityError("dataset was preprocessed with a different state than the model");
  }
}

std::vector<double> actual_costs(const Dataset& ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.records[i].actual_cost) throw ValidationError("record " + std::to_string(i) + " has no actual_cost");
    out.push_back(*ds.records[i].actual_cost);
  }
  return out;
}

std::vector<double> heuristic_costs(const Dataset& ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back(r.heuristic_cost);
  return out;
}

}  // namespace

template <typename T>
std::vector<double> predict_costs(const Regressor<T>& model, const Dataset& ds, std::size_t batch_size) {
  require_compatible(model, ds);
  const NumericStats cost = model.cost_stats();
  std::vector<double> out;
  out.reserve(ds.size());
  std::vector<const RateCard*> batch;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&ds.records[i]);
    Graph<T> g(false);
    const Var<T> z = model.predict(g, batch);
    for (Index i = 0; i < z.rows(); ++i) out.push_back(cost.mean + cost.std * static_cast<double>(z.value()(i, 0)));
  }
  return out;
}

template <typename T>
double evaluate_mae_percent(const Regressor<T>& model, const Dataset& ds) {
  const std::vector<double> pred = predict_costs(model, ds);
  return mae_percent(pred, actual_costs(ds), heuristic_costs(ds));
}

TrainResult train(Regressor<float>& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                  const EvalCallback& on_eval) {
  cfg.validate();
  require_compatible(model, train_ds);
  require_compatible(model, val_ds);
  if (train_ds.size() == 0) throw ValidationError("training set is empty");
  if (val_ds.size() == 0) throw ValidationError("validation set is empty");

  const NumericStats cost = model.cost_stats();
  std::vector<float> targets;
  targets.reserve(train_ds.size());
  for (double c : actual_costs(train_ds)) targets.push_back(static_cast<float>((c - cost.mean) / cost.std));
  const std::vector<double> val_actual = actual_costs(val_ds);
  const std::vector<double> val_heuristic = heuristic_costs(val_ds);

  ParameterStore<float>& params = model.parameters();
  Adam<float> adam(params, cfg.lr);
  PlateauScheduler scheduler(cfg.plateau_factor, cfg.plateau_patience, cfg.min_rel_improvement);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ForwardContext<float> ctx;
  ctx.dropout = static_cast<float>(model.config().dropout);
  ctx.rng = &dropout_rng;

  TrainResult result;
  result.best_val_mae_percent = std::numeric_limits<double>::infinity();
  std::vector<Tensor<float>> best;
  double loss_sum = 0.0;
  std::uint64_t loss_count = 0;
  std::uint64_t step = 0;

  auto evaluate = [&]() {
    const double val = mae_percent(predict_costs(model, val_ds), val_actual, val_heuristic);
    HistoryRow row{step, loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0, val, adam.lr()};
    result.history.push_back(row);
    if (on_eval) on_eval(row);
    if (val < result.best_val_mae_percent) {
      result.best_val_mae_percent = val;
      result.best_step = step;
      best.clear();
      for (std::size_t i = 0; i < params.size(); ++i) best.push_back(params[i].value);
    }
    adam.set_lr(scheduler.observe(val, adam.lr()));
    loss_sum = 0.0;
    loss_count = 0;
  };

  std::vector<std::size_t> order(train_ds.size());
  std::vector<const RateCard*> batch;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      batch.clear();
      Tensor<float> target(static_cast<Index>(end - start), 1);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train_ds.records[order[i]]);
        target(static_cast<Index>(i - start), 0) = targets[order[i]];
      }
      params.zero_grad();
      Graph<float> g;
      Var<float> loss = l1_loss(model.predict(g, batch, ctx), target);
      const double value = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at step " + std::to_string(step + 1) + " (epoch " +
                           std::to_string(epoch + 1) + ", lr " + std::to_string(adam.lr()) + ")");
      }
      g.backward(loss);
      adam.step();
      ++step;
      loss_sum += value;
      ++loss_count;
      if (step % static_cast<std::uint64_t>(cfg.eval_every) == 0) evaluate();
    }
  }
  if (result.history.empty() || result.history.back().step != step) evaluate();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best[i];
  result.steps = step;
  return result;
}

template class Adam<float>;
template class Adam<double>;
template std::vector<double> predict_costs<float>(const Regressor<float>&, const Dataset&, std::size_t);
template std::vector<double> predict_costs<double>(const Regressor<double>&, const Dataset&, std::size_t);
template double evaluate_mae_percent<float>(const Regressor<float>&, const Dataset&);
template double evaluate_mae_percent<double>(const Regressor<double>&, const Dataset&);

}  // namespace rct
