#pragma once

// Cost regressors: the rate-card transformer and the comparison models that
// share its embeddings, training loop and preprocessing.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rct/embeddings.hpp"
#include "rct/encoder.hpp"
#include "rct/model_config.hpp"
#include "rct/preprocess.hpp"

namespace rct {

template <typename T>
class Regressor {
 public:
  Regressor(FeatureSchema schema, ModelConfig config, std::shared_ptr<const PreprocessState> preprocess)
      : schema_(std::move(schema)), config_(std::move(config)), preprocess_(std::move(preprocess)) {}
  virtual ~Regressor() = default;
  Regressor(const Regressor&) = delete;
  Regressor& operator=(const Regressor&) = delete;

  // Predicted costs in standardized units, one row per card. Cards must be
  // encoded with preprocess().
  virtual Var<T> predict(Graph<T>& g, std::span<const RateCard* const> cards,
                         const ForwardContext<T>& ctx = {}) const = 0;

  const FeatureSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return config_; }
  const std::shared_ptr<const PreprocessState>& preprocess() const { return preprocess_; }
  // Cost scaling used for the heuristic-cost token and the prediction;
  // identity when the model has no preprocessing attached.
  NumericStats cost_stats() const { return preprocess_ ? preprocess_->cost : NumericStats{}; }

  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

 protected:
  FeatureSchema schema_;
  ModelConfig config_;
  std::shared_ptr<const PreprocessState> preprocess_;
  ParameterStore<T> store_;
};

// Embedding -> encoder stack -> mean pooling -> linear head. With the
// variable part of the layout disabled this is the flat transformer.
template <typename T>
class RctModel : public Regressor<T> {
 public:
  RctModel(const FeatureSchema& schema, const ModelConfig& config, std::shared_ptr<const PreprocessState> preprocess,
           std::mt19937_64& rng, TokenLayout layout = {});

  Var<T> predict(Graph<T>& g, std::span<const RateCard* const> cards,
                 const ForwardContext<T>& ctx = {}) const override;

  // Encoder, pooling and head applied to an assembled token batch.
  Var<T> forward_tokens(Graph<T>& g, const TokenBatch<T>& tokens, const ForwardContext<T>& ctx = {}) const;

  const RateCardEmbedder<T>& embedder() const { return embedder_; }
  const EncoderStack<T>& encoder() const { return encoder_; }
  const Linear<T>& head() const { return head_; }
  const TokenLayout& layout() const { return layout_; }

 private:
  TokenLayout layout_;
  RateCardEmbedder<T> embedder_;
  EncoderStack<T> encoder_;
  Linear<T> head_;
};

// Fixed-group and heuristic-cost tokens concatenated into one vector, then
// five dense layers (four GELU hidden layers of ff_width, linear output).
template <typename T>
class FeedForwardModel : public Regressor<T> {
 public:
  FeedForwardModel(const FeatureSchema& schema, const ModelConfig& config,
                   std::shared_ptr<const PreprocessState> preprocess, std::mt19937_64& rng);

  Var<T> predict(Graph<T>& g, std::span<const RateCard* const> cards,
                 const ForwardContext<T>& ctx = {}) const override;

  const std::vector<Linear<T>>& layers() const { return layers_; }

 private:
  RateCardEmbedder<T> embedder_;
  std::vector<Linear<T>> layers_;
};

// Dense encoding of the fixed groups and heuristic cost, concatenated with
// the pooled self-attention encoding of the item and charge tokens, then a
// linear head over the 2 * d_model vector (dense half first).
template <typename T>
class HybridModel : public Regressor<T> {
 public:
  HybridModel(const FeatureSchema& schema, const ModelConfig& config, std::shared_ptr<const PreprocessState> preprocess,
              std::mt19937_64& rng);

  Var<T> predict(Graph<T>& g, std::span<const RateCard* const> cards,
                 const ForwardContext<T>& ctx = {}) const override;

  const EncoderStack<T>& encoder() const { return encoder_; }
  const Linear<T>& head() const { return head_; }

 private:
  RateCardEmbedder<T> embedder_;
  Linear<T> dense_in_;
  Linear<T> dense_out_;
  EncoderStack<T> encoder_;
  Linear<T> head_;
};

// Parameters are created in a fixed order from a generator seeded with `seed`.
template <typename T>
std::unique_ptr<Regressor<T>> build_model(const FeatureSchema& schema, const ModelConfig& config,
                                          std::shared_ptr<const PreprocessState> preprocess, std::uint64_t seed);

// Same architecture with every parameter converted to another precision.
template <typename To, typename From>
std::unique_ptr<Regressor<To>> convert_model(const Regressor<From>& model);

struct AttentionMap {
  int layer = 0;
  int head = 0;
  Tensor<double> scores;  // tokens x tokens, rows sum to 1
};

struct Prediction {
  double cost = 0.0;  // currency units
  std::vector<AttentionMap> maps;
};

// Single-card inference. With capture, returns layers x heads maps (empty for
// models without attention over the full card).
template <typename T>
Prediction forward(const Regressor<T>& model, const RateCard& card, bool capture = false);

extern template class RctModel<float>;
extern template class RctModel<double>;
extern template class FeedForwardModel<float>;
extern template class FeedForwardModel<double>;
extern template class HybridModel<float>;
extern template class HybridModel<double>;

}  // namespace rct
