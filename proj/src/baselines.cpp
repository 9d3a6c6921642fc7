#include "rct/model.hpp"

namespace rct {

namespace {

constexpr TokenLayout kFixedAndHeuristic{true, false, true};
constexpr TokenLayout kVariableOnly{false, true, false};

Index fixed_token_count(const FeatureSchema& schema) { return static_cast<Index>(schema.fixed_feature_count()) + 1; }

// Stacked per-card fixed tokens -> one row per card.
template <typename T>
Var<T> flatten_cards(const TokenBatch<T>& tokens, Index per_card) {
  const Index batch = static_cast<Index>(tokens.batch_size());
  return reshape(tokens.tokens, batch, per_card * tokens.tokens.cols());
}

}  // namespace

template <typename T>
FeedForwardModel<T>::FeedForwardModel(const FeatureSchema& schema, const ModelConfig& config,
                                      std::shared_ptr<const PreprocessState> preprocess, std::mt19937_64& rng)
    : Regressor<T>(schema, config, std::move(preprocess)) {
  config.validate();
  embedder_ = RateCardEmbedder<T>(this->store_, schema, config.d_model, config.reduction, rng);
  Index width = fixed_token_count(schema) * config.d_model;
  for (int l = 0; l < 5; ++l) {
    const Index out = l == 4 ? 1 : config.ff_width;
    layers_.push_back(Linear<T>::create(this->store_, "ff." + std::to_string(l), width, out, true, rng));
    width = out;
  }
}

template <typename T>
Var<T> FeedForwardModel<T>::predict(Graph<T>& g, std::span<const RateCard* const> cards,
                                    const ForwardContext<T>& ctx) const {
  const TokenBatch<T> tokens = embedder_.embed(g, cards, this->cost_stats(), kFixedAndHeuristic);
  Var<T> x = flatten_cards(tokens, fixed_token_count(this->schema_));
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    x = gelu(layers_[l](g, x));
    if (ctx.dropout > T(0)) x = dropout(x, ctx.dropout, *ctx.rng);
  }
  if (ctx.pooled != nullptr) *ctx.pooled = x.value();
  return layers_.back()(g, x);
}

template <typename T>
HybridModel<T>::HybridModel(const FeatureSchema& schema, const ModelConfig& config,
                            std::shared_ptr<const PreprocessState> preprocess, std::mt19937_64& rng)
    : Regressor<T>(schema, config, std::move(preprocess)) {
  config.validate();
  embedder_ = RateCardEmbedder<T>(this->store_, schema, config.d_model, config.reduction, rng);
  dense_in_ = Linear<T>::create(this->store_, "dense.0", fixed_token_count(schema) * config.d_model, config.ff_width,
                                true, rng);
  dense_out_ = Linear<T>::create(this->store_, "dense.1", config.ff_width, config.d_model, true, rng);
  encoder_ = EncoderStack<T>::create(this->store_, "encoder", config.d_model, config.layers, config.heads,
                                     config.ff_width, rng);
  head_ = Linear<T>::create(this->store_, "head", 2 * static_cast<Index>(config.d_model), 1, true, rng);
}

template <typename T>
Var<T> HybridModel<T>::predict(Graph<T>& g, std::span<const RateCard* const> cards,
                               const ForwardContext<T>& ctx) const {
  const NumericStats cost = this->cost_stats();
  const TokenBatch<T> fixed = embedder_.embed(g, cards, cost, kFixedAndHeuristic);
  Var<T> dense = dense_out_(g, gelu(dense_in_(g, flatten_cards(fixed, fixed_token_count(this->schema_)))));

  const TokenBatch<T> variable = embedder_.embed(g, cards, cost, kVariableOnly);
  Var<T> attended = segment_mean(encoder_.forward(g, variable.tokens, variable.segments, ctx), variable.segments);

  const Var<T> parts[] = {dense, attended};
  Var<T> joint = concat_cols<T>(parts);
  if (ctx.pooled != nullptr) *ctx.pooled = joint.value();
  return head_(g, joint);
}

template class FeedForwardModel<float>;
template class FeedForwardModel<double>;
template class HybridModel<float>;
template class HybridModel<double>;

}  // namespace rct
