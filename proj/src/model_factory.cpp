#include <array>
#include <utility>

#include "rct/errors.hpp"
#include "rct/model.hpp"

namespace rct {

namespace {

constexpr std::array<std::pair<ModelKind, std::string_view>, 4> kKinds = {{
    {ModelKind::rct, "rct"},
    {ModelKind::flat_transformer, "flat_transformer"},
    {ModelKind::feedforward, "feedforward"},
    {ModelKind::hybrid, "hybrid"},
}};

}  // namespace

std::string_view to_string(ModelKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view s) {
  for (const auto& [kind, name] : kKinds) {
    if (name == s) return kind;
  }
  throw ValidationError("unknown model kind '" + std::string(s) +
                        "' (expected rct, flat_transformer, feedforward or hybrid)");
}

std::string_view to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

Reduction parse_reduction(std::string_view s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw ValidationError("unknown reduction '" + std::string(s) + "' (expected mean or sum)");
}

void ModelConfig::validate() const {
  if (d_model <= 0) throw ValidationError("model.d_model must be positive");
  if (layers <= 0) throw ValidationError("model.layers must be positive");
  if (heads <= 0) throw ValidationError("model.heads must be positive");
  if (d_model % heads != 0) {
    throw ValidationError("model.heads (" + std::to_string(heads) + ") must divide model.d_model (" +
                          std::to_string(d_model) + ")");
  }
  if (ff_width <= 0) throw ValidationError("model.ff_width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model.dropout must be in [0, 1)");
  if (pooling != "mean") throw ValidationError("model.pooling '" + pooling + "' is not supported (only mean)");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(kind));
  j["d_model"] = d_model;
  j["layers"] = layers;
  j["heads"] = heads;
  j["ff_width"] = ff_width;
  j["dropout"] = dropout;
  j["reduction"] = std::string(to_string(reduction));
  j["pooling"] = pooling;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  ModelConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") {
        c.kind = parse_model_kind(value.get<std::string>());
      } else if (key == "d_model") {
        c.d_model = value.get<int>();
      } else if (key == "layers") {
        c.layers = value.get<int>();
      } else if (key == "heads") {
        c.heads = value.get<int>();
      } else if (key == "ff_width") {
        c.ff_width = value.get<int>();
      } else if (key == "dropout") {
        c.dropout = value.get<double>();
      } else if (key == "reduction") {
        c.reduction = parse_reduction(value.get<std::string>());
      } else if (key == "pooling") {
        c.pooling = value.get<std::string>();
      } else {
        throw ValidationError("unknown key 'model." + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  return c;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.d_model = 128;
  c.layers = 6;
  c.heads = 16;
  c.ff_width = 512;
  return c;
}

template <typename T>
std::unique_ptr<Regressor<T>> build_model(const FeatureSchema& schema, const ModelConfig& config,
                                          std::shared_ptr<const PreprocessState> preprocess, std::uint64_t seed) {
  config.validate();
  schema.validate();
  if (preprocess && !(preprocess->schema == schema)) {
    throw CompatibilityError("preprocessing state was fit under a different feature schema");
  }
  std::mt19937_64 rng(seed);
  switch (config.kind) {
    case ModelKind::rct:
      return std::make_unique<RctModel<T>>(schema, config, std::move(preprocess), rng);
    case ModelKind::flat_transformer:
      return std::make_unique<RctModel<T>>(schema, config, std::move(preprocess), rng, TokenLayout{true, false, true});
    case ModelKind::feedforward:
      return std::make_unique<FeedForwardModel<T>>(schema, config, std::move(preprocess), rng);
    case ModelKind::hybrid:
      return std::make_unique<HybridModel<T>>(schema, config, std::move(preprocess), rng);
  }
  throw ValidationError("unknown model kind");
}

template <typename To, typename From>
std::unique_ptr<Regressor<To>> convert_model(const Regressor<From>& model) {
  auto out = build_model<To>(model.schema(), model.config(), model.preprocess(), 0);
  const ParameterStore<From>& src = model.parameters();
  ParameterStore<To>& dst = out->parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].value = src[i].value.template cast<To>();
  return out;
}

template std::unique_ptr<Regressor<float>> build_model<float>(const FeatureSchema&, const ModelConfig&,
                                                              std::shared_ptr<const PreprocessState>, std::uint64_t);
template std::unique_ptr<Regressor<double>> build_model<double>(const FeatureSchema&, const ModelConfig&,
                                                                std::shared_ptr<const PreprocessState>, std::uint64_t);
template std::unique_ptr<Regressor<double>> convert_model<double, float>(const Regressor<float>&);
template std::unique_ptr<Regressor<float>> convert_model<float, double>(const Regressor<double>&);
template std::unique_ptr<Regressor<double>> convert_model<double, double>(const Regressor<double>&);
template std::unique_ptr<Regressor<float>> convert_model<float, float>(const Regressor<float>&);

}  // namespace rct
