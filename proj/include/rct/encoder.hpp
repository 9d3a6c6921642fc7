#pragma once

// Pre-norm transformer encoder blocks over stacked token segments.

#include <random>
#include <string>
#include <vector>

#include "rct/graph.hpp"
#include "rct/ops.hpp"

namespace rct {

// Per-call options shared by every model's forward pass.
template <typename T>
struct ForwardContext {
  T dropout = T(0);
  std::mt19937_64* rng = nullptr;  // required when dropout > 0
  // When set, receives one AttentionProbs per encoder layer.
  std::vector<AttentionProbs<T>>* attention = nullptr;
  // When set, receives the pooled representation (batch x width) that feeds
  // the regression head.
  Tensor<T>* pooled = nullptr;
};

// y = x W + b, W: in x out. Weight ~ U(-sqrt(1/in), sqrt(1/in)), bias 0.
template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;  // null for bias-free projections

  static Linear create(ParameterStore<T>& store, const std::string& name, Index in, Index out, bool with_bias,
                       std::mt19937_64& rng);
  Var<T> operator()(Graph<T>& g, Var<T> x) const;
};

template <typename T>
struct LayerNormParams {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  static LayerNormParams create(ParameterStore<T>& store, const std::string& name, Index width);
  Var<T> operator()(Graph<T>& g, Var<T> x) const;
};

// Column slices of a block's query/key/value projections, d_model x d_head.
template <typename T>
struct AttentionHead {
  Tensor<T> wq;
  Tensor<T> wk;
  Tensor<T> wv;
};

// Single-head reference path built from primitive ops:
//   a_ij = softmax_j(q_i . k_j / sqrt(d_head)),  o_i = sum_j a_ij v_j.
template <typename T>
Tensor<T> attention_scores(const AttentionHead<T>& head, const Tensor<T>& tokens);
template <typename T>
Tensor<T> attend(const AttentionHead<T>& head, const Tensor<T>& tokens);

template <typename T>
struct EncoderBlock {
  Index heads = 1;
  LayerNormParams<T> ln1;
  Linear<T> wq, wk, wv;  // d_model x d_model, no bias; head h owns column block h
  Linear<T> wo;
  LayerNormParams<T> ln2;
  Linear<T> ff1, ff2;

  static EncoderBlock create(ParameterStore<T>& store, const std::string& name, Index d_model, Index heads,
                             Index ff_width, std::mt19937_64& rng);

  Index d_model() const { return wq.weight->value.rows(); }
  Index d_head() const { return d_model() / heads; }
  AttentionHead<T> head(Index h) const;

  // x <- x + Wo MHSA(LN1(x)) + bo;  x <- x + FF(LN2(x)), FF = W2 gelu(W1 . + b1) + b2.
  Var<T> forward(Graph<T>& g, Var<T> x, const Segments& segments, const ForwardContext<T>& ctx,
                 AttentionProbs<T>* capture = nullptr) const;
};

template <typename T>
struct EncoderStack {
  std::vector<EncoderBlock<T>> blocks;

  static EncoderStack create(ParameterStore<T>& store, const std::string& name, Index d_model, Index layers,
                             Index heads, Index ff_width, std::mt19937_64& rng);

  Var<T> forward(Graph<T>& g, Var<T> x, const Segments& segments, const ForwardContext<T>& ctx) const;
};

extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct LayerNormParams<float>;
extern template struct LayerNormParams<double>;
extern template struct EncoderBlock<float>;
extern template struct EncoderBlock<double>;
extern template struct EncoderStack<float>;
extern template struct EncoderStack<double>;

}  // namespace rct
