#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace rct {

enum class ModelKind { rct, flat_transformer, feedforward, hybrid };

// How the per-feature tokens of one item or charge are reduced to one token.
enum class Reduction { mean, sum };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);
std::string_view to_string(Reduction r);
Reduction parse_reduction(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::rct;
  int d_model = 32;
  int layers = 2;
  int heads = 4;
  int ff_width = 128;
  double dropout = 0.0;
  Reduction reduction = Reduction::mean;
  // Pooling over final tokens; "mean" is the only supported mode.
  std::string pooling = "mean";

  int d_head() const { return d_model / heads; }

  // Throws ValidationError (e.g. heads not dividing d_model).
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);

  // Full-scale architecture: 128-wide, 6 layers, 16 heads.
  static ModelConfig full_scale();

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace rct
