#include "rct/embeddings.hpp"

#include "rct/errors.hpp"

namespace rct {

namespace {

// Collects row terms and the parameter nodes they read from.
template <typename T>
class TokenAssembler {
 public:
  explicit TokenAssembler(Graph<T>& g) : g_(g) {}

  std::uint32_t new_row() { return rows_++; }
  std::uint32_t rows() const { return rows_; }

  void add_feature(std::uint32_t row, const FeatureEmbedding<T>& block, const FeatureValue& value, T coef) {
    if (const auto* cat = std::get_if<CategoricalEmbedding<T>>(&block)) {
      const auto* idx = std::get_if<std::int32_t>(&value);
      if (idx == nullptr) throw StateError("embedding: categorical value is not encoded; run apply_preprocess first");
      if (*idx < 0 || *idx >= cat->table->value.rows()) {
        throw ValidationError("embedding: category index " + std::to_string(*idx) + " out of range for " +
                              cat->table->name + " with " + std::to_string(cat->table->value.rows()) + " rows");
      }
      terms_.push_back({row, source(cat->table), static_cast<std::uint32_t>(*idx), coef});
    } else {
      const auto& cont = std::get<ContinuousEmbedding<T>>(block);
      const auto* x = std::get_if<double>(&value);
      if (x == nullptr) throw ValidationError("embedding: numerical value expected for " + cont.weight->name);
      add_continuous(row, cont, static_cast<T>(*x), coef);
    }
  }

  void add_continuous(std::uint32_t row, const ContinuousEmbedding<T>& cont, T x, T coef) {
    terms_.push_back({row, source(cont.weight), 0, x * coef});
    terms_.push_back({row, source(cont.bias), 0, coef});
  }

  Var<T> build(Index cols) {
    if (rows_ == 0) return g_.constant(Tensor<T>(0, cols));
    return combine_rows<T>(sources_, std::move(terms_), rows_, cols);
  }

 private:
  std::uint32_t source(Parameter<T>* p) {
    auto [it, inserted] = index_.emplace(p, static_cast<std::uint32_t>(sources_.size()));
    if (inserted) sources_.push_back(g_.parameter(*p));
    return it->second;
  }

  Graph<T>& g_;
  std::vector<Var<T>> sources_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> index_;
  std::vector<RowTerm<T>> terms_;
  std::uint32_t rows_ = 0;
};

template <typename T>
void add_entry(TokenAssembler<T>& a, const MixedEmbeddingLayer<T>& mel, const ValueVector& entry,
               Reduction reduction) {
  if (entry.size() != mel.blocks.size()) {
    throw ValidationError("embedding: " + std::string(group_name(mel.group)) + " entry has " +
                          std::to_string(entry.size()) + " values, expected " + std::to_string(mel.blocks.size()));
  }
  const std::uint32_t row = a.new_row();
  const T coef = reduction == Reduction::mean ? T(1) / static_cast<T>(entry.size()) : T(1);
  for (std::size_t f = 0; f < entry.size(); ++f) a.add_feature(row, mel.blocks[f], entry[f], coef);
}

template <typename T>
void add_group(TokenAssembler<T>& a, const MixedEmbeddingLayer<T>& mel, const ValueVector& values) {
  if (values.size() != mel.blocks.size()) {
    throw ValidationError("embedding: " + std::string(group_name(mel.group)) + " has " +
                          std::to_string(values.size()) + " values, expected " + std::to_string(mel.blocks.size()));
  }
  for (std::size_t f = 0; f < values.size(); ++f) a.add_feature(a.new_row(), mel.blocks[f], values[f], T(1));
}

}  // namespace

template <typename T>
MixedEmbeddingLayer<T> MixedEmbeddingLayer<T>::create(ParameterStore<T>& store, const std::string& prefix,
                                                      GroupId group, const std::vector<FeatureSpec>& specs,
                                                      Index d_model, std::mt19937_64& rng) {
  std::normal_distribution<double> init(0.0, 0.02);
  auto normal = [&](Index rows) {
    Tensor<T> t(rows, d_model);
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(init(rng));
    return t;
  };
  MixedEmbeddingLayer mel;
  mel.group = group;
  for (const auto& spec : specs) {
    const std::string base = prefix + "." + std::string(group_name(group)) + "." + spec.name;
    if (spec.kind == FeatureKind::categorical) {
      mel.blocks.emplace_back(CategoricalEmbedding<T>{&store.add(base + ".table", normal(spec.cardinality + 1))});
    } else {
      auto& w = store.add(base + ".weight", normal(1));
      auto& b = store.add(base + ".bias", Tensor<T>::Zero(1, d_model));
      mel.blocks.emplace_back(ContinuousEmbedding<T>{&w, &b});
    }
  }
  return mel;
}

template <typename T>
RateCardEmbedder<T>::RateCardEmbedder(ParameterStore<T>& store, const FeatureSchema& schema, Index d_model,
                                      Reduction reduction, std::mt19937_64& rng)
    : d_model_(d_model), reduction_(reduction) {
  for (GroupId g : kAllGroups) {
    layers_[static_cast<std::size_t>(g)] =
        MixedEmbeddingLayer<T>::create(store, "embed", g, schema.group(g), d_model, rng);
  }
  std::normal_distribution<double> init(0.0, 0.02);
  Tensor<T> w(1, d_model);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(init(rng));
  heuristic_.weight = &store.add("embed.heuristic_cost.weight", std::move(w));
  heuristic_.bias = &store.add("embed.heuristic_cost.bias", Tensor<T>::Zero(1, d_model));
}

template <typename T>
Index RateCardEmbedder<T>::sequence_length(const FeatureSchema& schema, const RateCard& card,
                                           const TokenLayout& layout) {
  Index n = 0;
  if (layout.fixed) n += static_cast<Index>(schema.fixed_feature_count());
  if (layout.variable) n += static_cast<Index>(card.items.size() + card.charges.size());
  if (layout.heuristic) n += 1;
  return n;
}

template <typename T>
TokenBatch<T> RateCardEmbedder<T>::embed(Graph<T>& g, std::span<const RateCard* const> cards,
                                         const NumericStats& cost, const TokenLayout& layout) const {
  TokenAssembler<T> a(g);
  Segments segments{0};
  segments.reserve(cards.size() + 1);
  for (const RateCard* card : cards) {
    if (layout.fixed) {
      for (GroupId grp : kFixedGroups) add_group(a, layer(grp), card->fixed(grp));
    }
    if (layout.variable) {
      for (const auto& item : card->items) add_entry(a, layer(GroupId::item), item, reduction_);
      for (const auto& charge : card->charges) add_entry(a, layer(GroupId::charge), charge, reduction_);
    }
    if (layout.heuristic) {
      const T x = static_cast<T>((card->heuristic_cost - cost.mean) / cost.std);
      a.add_continuous(a.new_row(), heuristic_, x, T(1));
    }
    if (static_cast<Index>(a.rows()) == segments.back()) {
      throw ValidationError("embedding: token layout produced an empty sequence");
    }
    segments.push_back(a.rows());
  }
  return TokenBatch<T>{a.build(d_model_), std::move(segments)};
}

template <typename T>
TokenBatch<T> embed_group(Graph<T>& g, const MixedEmbeddingLayer<T>& mel, const ValueVector& values, Index d_model) {
  TokenAssembler<T> a(g);
  add_group(a, mel, values);
  return TokenBatch<T>{a.build(d_model), Segments{0, static_cast<Index>(a.rows())}};
}

template <typename T>
TokenBatch<T> embed_variable(Graph<T>& g, const MixedEmbeddingLayer<T>& mel, const std::vector<ValueVector>& entries,
                             Index d_model, Reduction reduction) {
  TokenAssembler<T> a(g);
  for (const auto& e : entries) add_entry(a, mel, e, reduction);
  return TokenBatch<T>{a.build(d_model), Segments{0, static_cast<Index>(a.rows())}};
}

template <typename T>
TokenBatch<T> embed_rate_card(Graph<T>& g, const RateCardEmbedder<T>& e, const RateCard& card,
                              const NumericStats& cost) {
  const RateCard* one[] = {&card};
  return e.embed(g, one, cost);
}

template struct MixedEmbeddingLayer<float>;
template struct MixedEmbeddingLayer<double>;
template class RateCardEmbedder<float>;
template class RateCardEmbedder<double>;

#define RCT_INSTANTIATE_EMBED(T)                                                                                   \
  template TokenBatch<T> embed_group<T>(Graph<T>&, const MixedEmbeddingLayer<T>&, const ValueVector&, Index);      \
  template TokenBatch<T> embed_variable<T>(Graph<T>&, const MixedEmbeddingLayer<T>&, const std::vector<ValueVector>&, \
                                           Index, Reduction);                                                      \
  template TokenBatch<T> embed_rate_card<T>(Graph<T>&, const RateCardEmbedder<T>&, const RateCard&,               \
                                            const NumericStats&);
RCT_INSTANTIATE_EMBED(float)
RCT_INSTANTIATE_EMBED(double)
#undef RCT_INSTANTIATE_EMBED

}  // namespace rct
