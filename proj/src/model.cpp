#include "rct/model.hpp"

namespace rct {

template <typename T>
RctModel<T>::RctModel(const FeatureSchema& schema, const ModelConfig& config,
                      std::shared_ptr<const PreprocessState> preprocess, std::mt19937_64& rng, TokenLayout layout)
    : Regressor<T>(schema, config, std::move(preprocess)), layout_(layout) {
  config.validate();
  embedder_ = RateCardEmbedder<T>(this->store_, schema, config.d_model, config.reduction, rng);
  encoder_ = EncoderStack<T>::create(this->store_, "encoder", config.d_model, config.layers, config.heads,
                                     config.ff_width, rng);
  head_ = Linear<T>::create(this->store_, "head", config.d_model, 1, true, rng);
}

template <typename T>
Var<T> RctModel<T>::predict(Graph<T>& g, std::span<const RateCard* const> cards, const ForwardContext<T>& ctx) const {
  return forward_tokens(g, embedder_.embed(g, cards, this->cost_stats(), layout_), ctx);
}

template <typename T>
Var<T> RctModel<T>::forward_tokens(Graph<T>& g, const TokenBatch<T>& tokens, const ForwardContext<T>& ctx) const {
  Var<T> x = encoder_.forward(g, tokens.tokens, tokens.segments, ctx);
  Var<T> pooled = segment_mean(x, tokens.segments);
  if (ctx.pooled != nullptr) *ctx.pooled = pooled.value();
  return head_(g, pooled);
}

template <typename T>
Prediction forward(const Regressor<T>& model, const RateCard& card, bool capture) {
  Graph<T> g(false);
  std::vector<AttentionProbs<T>> probs;
  ForwardContext<T> ctx;
  if (capture) ctx.attention = &probs;
  const RateCard* one[] = {&card};
  const Var<T> z = model.predict(g, one, ctx);
  Prediction p;
  const NumericStats cost = model.cost_stats();
  p.cost = cost.mean + cost.std * static_cast<double>(z.value()(0, 0));
  for (std::size_t l = 0; l < probs.size(); ++l) {
    for (Index h = 0; h < probs[l].heads; ++h) {
      p.maps.push_back(AttentionMap{static_cast<int>(l), static_cast<int>(h),
                                    probs[l].at(0, static_cast<std::size_t>(h)).template cast<double>()});
    }
  }
  return p;
}

template class RctModel<float>;
template class RctModel<double>;
template Prediction forward<float>(const Regressor<float>&, const RateCard&, bool);
template Prediction forward<double>(const Regressor<double>&, const RateCard&, bool);

}  // namespace rct
