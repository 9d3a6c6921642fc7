#pragma once

// Mixed embedding layers and assembly of the rate-card token sequence.
//
// Tokens of a batch are stacked into one (tokens x d_model) matrix; Segments
// mark where each record's sequence starts. Every token is a sparse linear
// combination of embedding parameter rows, so the whole batch is assembled by
// a single combine_rows node.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "rct/dataset.hpp"
#include "rct/graph.hpp"
#include "rct/model_config.hpp"
#include "rct/ops.hpp"
#include "rct/preprocess.hpp"

namespace rct {

// Lookup table of (cardinality + 1) rows; row 0 embeds unknown categories.
template <typename T>
struct CategoricalEmbedding {
  Parameter<T>* table = nullptr;
};

// token = x * weight + bias.
template <typename T>
struct ContinuousEmbedding {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
};

template <typename T>
using FeatureEmbedding = std::variant<CategoricalEmbedding<T>, ContinuousEmbedding<T>>;

template <typename T>
struct MixedEmbeddingLayer {
  GroupId group = GroupId::dimension;
  std::vector<FeatureEmbedding<T>> blocks;  // schema order

  // Tables and continuous weights ~ N(0, 0.02); continuous biases 0.
  static MixedEmbeddingLayer create(ParameterStore<T>& store, const std::string& prefix, GroupId group,
                                    const std::vector<FeatureSpec>& specs, Index d_model, std::mt19937_64& rng);
};

// A stacked batch of token sequences (a single sequence when segments has two
// entries).
template <typename T>
struct TokenBatch {
  Var<T> tokens;
  Segments segments;

  std::size_t batch_size() const { return segments.size() - 1; }
  Index length(std::size_t b) const { return segments[b + 1] - segments[b]; }
};

// Which parts of the rate card become tokens.
struct TokenLayout {
  bool fixed = true;      // dimension, route, service
  bool variable = true;   // one token per item and per charge
  bool heuristic = true;  // trailing C^A token
};

template <typename T>
class RateCardEmbedder {
 public:
  RateCardEmbedder() = default;
  RateCardEmbedder(ParameterStore<T>& store, const FeatureSchema& schema, Index d_model, Reduction reduction,
                   std::mt19937_64& rng);

  Index d_model() const { return d_model_; }
  Reduction reduction() const { return reduction_; }
  const MixedEmbeddingLayer<T>& layer(GroupId g) const { return layers_[static_cast<std::size_t>(g)]; }
  const ContinuousEmbedding<T>& heuristic() const { return heuristic_; }

  // Token count of one card under a layout.
  static Index sequence_length(const FeatureSchema& schema, const RateCard& card, const TokenLayout& layout);

  // Per card: [dimension | route | service | items | charges | C^A], with
  // parts omitted by the layout. `cost` standardizes the heuristic cost.
  TokenBatch<T> embed(Graph<T>& g, std::span<const RateCard* const> cards, const NumericStats& cost,
                      const TokenLayout& layout = {}) const;

 private:
  Index d_model_ = 0;
  Reduction reduction_ = Reduction::mean;
  std::array<MixedEmbeddingLayer<T>, 5> layers_;
  ContinuousEmbedding<T> heuristic_;
};

// One token per feature of a fixed-length group.
template <typename T>
TokenBatch<T> embed_group(Graph<T>& g, const MixedEmbeddingLayer<T>& mel, const ValueVector& values, Index d_model);

// One token per entry: the mean (or sum) of the entry's feature tokens. An
// empty list yields an empty sequence.
template <typename T>
TokenBatch<T> embed_variable(Graph<T>& g, const MixedEmbeddingLayer<T>& mel, const std::vector<ValueVector>& entries,
                             Index d_model, Reduction reduction = Reduction::mean);

template <typename T>
TokenBatch<T> embed_rate_card(Graph<T>& g, const RateCardEmbedder<T>& e, const RateCard& card,
                              const NumericStats& cost);

extern template struct MixedEmbeddingLayer<float>;
extern template struct MixedEmbeddingLayer<double>;
extern template class RateCardEmbedder<float>;
extern template class RateCardEmbedder<double>;

}  // namespace rct
