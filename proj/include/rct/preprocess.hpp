#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rct/dataset.hpp"

namespace rct {

// Mean and population standard deviation. A zero std marks a feature that was
// constant on the training split; it standardizes to 0.
struct NumericStats {
  double mean = 0.0;
  double std = 1.0;

  double standardize(double x) const { return std == 0.0 ? 0.0 : (x - mean) / std; }

  bool operator==(const NumericStats&) const = default;
};

// Label encoding with index 0 reserved for categories not seen in training.
class CategoryMap {
 public:
  CategoryMap() = default;
  explicit CategoryMap(std::vector<std::string> categories);

  std::int32_t encode(std::string_view category) const;
  const std::string& decode(std::int32_t index) const;
  std::size_t size() const { return categories_.size(); }
  const std::vector<std::string>& categories() const { return categories_; }

  bool operator==(const CategoryMap& o) const { return categories_ == o.categories_; }

 private:
  std::vector<std::string> categories_;
  std::unordered_map<std::string, std::int32_t> index_;
};

using FeatureEncoder = std::variant<CategoryMap, NumericStats>;

struct PreprocessState {
  FeatureSchema schema;
  std::array<std::vector<FeatureEncoder>, 5> encoders;
  // Shared scaling of actual and heuristic cost, fit on training actual costs.
  NumericStats cost;

  const std::vector<FeatureEncoder>& group(GroupId g) const { return encoders[static_cast<std::size_t>(g)]; }

  double standardize_cost(double c) const { return (c - cost.mean) / cost.std; }
  double destandardize_cost(double z) const { return z * cost.std + cost.mean; }

  nlohmann::ordered_json to_json() const;
  static PreprocessState from_json(const nlohmann::json& j);

  bool operator==(const PreprocessState&) const = default;
};

// Category maps cover exactly the categories in `train` (sorted); numerical
// statistics pool every list entry for item and charge features.
PreprocessState fit_preprocess(const Dataset& train);

// Encodes categoricals and standardizes numericals. Costs stay in currency
// units. Rejects datasets that are already encoded.
Dataset apply_preprocess(const Dataset& ds, std::shared_ptr<const PreprocessState> state);

}  // namespace rct
