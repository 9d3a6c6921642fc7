#include "rct/encoder.hpp"

#include <cmath>

namespace rct {

template <typename T>
Linear<T> Linear<T>::create(ParameterStore<T>& store, const std::string& name, Index in, Index out, bool with_bias,
                            std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> init(-bound, bound);
  Tensor<T> w(in, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(init(rng));
  Linear lin;
  lin.weight = &store.add(name + ".weight", std::move(w));
  if (with_bias) lin.bias = &store.add(name + ".bias", Tensor<T>::Zero(1, out));
  return lin;
}

template <typename T>
Var<T> Linear<T>::operator()(Graph<T>& g, Var<T> x) const {
  Var<T> y = matmul(x, g.parameter(*weight));
  return bias != nullptr ? add_row(y, g.parameter(*bias)) : y;
}

template <typename T>
LayerNormParams<T> LayerNormParams<T>::create(ParameterStore<T>& store, const std::string& name, Index width) {
  LayerNormParams ln;
  ln.gain = &store.add(name + ".gain", Tensor<T>::Ones(1, width));
  ln.bias = &store.add(name + ".bias", Tensor<T>::Zero(1, width));
  return ln;
}

template <typename T>
Var<T> LayerNormParams<T>::operator()(Graph<T>& g, Var<T> x) const {
  return layer_norm_rows(x, g.parameter(*gain), g.parameter(*bias));
}

template <typename T>
Tensor<T> attention_scores(const AttentionHead<T>& head, const Tensor<T>& tokens) {
  Graph<T> g(false);
  Var<T> x = g.constant(tokens);
  Var<T> q = matmul(x, g.constant(head.wq));
  Var<T> k = matmul(x, g.constant(head.wk));
  Tensor<T> kt = k.value().transpose();
  const T inv = T(1) / std::sqrt(static_cast<T>(head.wq.cols()));
  return softmax_rows(scale(matmul(q, g.constant(std::move(kt))), inv)).value();
}

template <typename T>
Tensor<T> attend(const AttentionHead<T>& head, const Tensor<T>& tokens) {
  Graph<T> g(false);
  Var<T> a = g.constant(attention_scores(head, tokens));
  Var<T> v = matmul(g.constant(tokens), g.constant(head.wv));
  return matmul(a, v).value();
}

template <typename T>
EncoderBlock<T> EncoderBlock<T>::create(ParameterStore<T>& store, const std::string& name, Index d_model,
                                        Index heads, Index ff_width, std::mt19937_64& rng) {
  if (heads <= 0 || d_model % heads != 0) {
    throw ValidationError("encoder: d_model " + std::to_string(d_model) + " is not divisible by " +
                          std::to_string(heads) + " heads");
  }
  EncoderBlock b;
  b.heads = heads;
  b.ln1 = LayerNormParams<T>::create(store, name + ".ln1", d_model);
  b.wq = Linear<T>::create(store, name + ".attn.wq", d_model, d_model, false, rng);
  b.wk = Linear<T>::create(store, name + ".attn.wk", d_model, d_model, false, rng);
  b.wv = Linear<T>::create(store, name + ".attn.wv", d_model, d_model, false, rng);
  b.wo = Linear<T>::create(store, name + ".attn.wo", d_model, d_model, true, rng);
  b.ln2 = LayerNormParams<T>::create(store, name + ".ln2", d_model);
  b.ff1 = Linear<T>::create(store, name + ".ff1", d_model, ff_width, true, rng);
  b.ff2 = Linear<T>::create(store, name + ".ff2", ff_width, d_model, true, rng);
  return b;
}

template <typename T>
AttentionHead<T> EncoderBlock<T>::head(Index h) const {
  const Index dh = d_head();
  return AttentionHead<T>{wq.weight->value.middleCols(h * dh, dh), wk.weight->value.middleCols(h * dh, dh),
                          wv.weight->value.middleCols(h * dh, dh)};
}

template <typename T>
Var<T> EncoderBlock<T>::forward(Graph<T>& g, Var<T> x, const Segments& segments, const ForwardContext<T>& ctx,
                                AttentionProbs<T>* capture) const {
  auto drop = [&](Var<T> v) { return ctx.dropout > T(0) ? dropout(v, ctx.dropout, *ctx.rng) : v; };
  Var<T> h = ln1(g, x);
  Var<T> attn = multi_head_attention(wq(g, h), wk(g, h), wv(g, h), segments, heads, capture);
  x = add(x, drop(wo(g, attn)));
  Var<T> f = ff2(g, gelu(ff1(g, ln2(g, x))));
  return add(x, drop(f));
}

template <typename T>
EncoderStack<T> EncoderStack<T>::create(ParameterStore<T>& store, const std::string& name, Index d_model,
                                        Index layers, Index heads, Index ff_width, std::mt19937_64& rng) {
  EncoderStack s;
  for (Index l = 0; l < layers; ++l) {
    s.blocks.push_back(EncoderBlock<T>::create(store, name + "." + std::to_string(l), d_model, heads, ff_width, rng));
  }
  return s;
}

template <typename T>
Var<T> EncoderStack<T>::forward(Graph<T>& g, Var<T> x, const Segments& segments, const ForwardContext<T>& ctx) const {
  if (ctx.attention != nullptr) ctx.attention->assign(blocks.size(), AttentionProbs<T>{});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    x = blocks[l].forward(g, x, segments, ctx, ctx.attention != nullptr ? &(*ctx.attention)[l] : nullptr);
  }
  return x;
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNormParams<float>;
template struct LayerNormParams<double>;
template struct EncoderBlock<float>;
template struct EncoderBlock<double>;
template struct EncoderStack<float>;
template struct EncoderStack<double>;
template Tensor<float> attention_scores<float>(const AttentionHead<float>&, const Tensor<float>&);
template Tensor<double> attention_scores<double>(const AttentionHead<double>&, const Tensor<double>&);
template Tensor<float> attend<float>(const AttentionHead<float>&, const Tensor<float>&);
template Tensor<double> attend<double>(const AttentionHead<double>&, const Tensor<double>&);

}  // namespace rct
