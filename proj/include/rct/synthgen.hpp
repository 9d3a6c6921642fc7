#pragma once

// Seeded synthetic rate-card data with a known cost function.
//
// Actual cost is an additive base cost plus the deltas of every anomaly rule
// (a conjunction of three or more categorical conditions) the card satisfies.
// The heuristic cost sees only the base cost plus Gaussian noise, so the gap
// between the two is exactly the anomaly deltas and the noise.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rct/dataset.hpp"

namespace rct {

struct AnomalyCondition {
  GroupId group = GroupId::dimension;
  std::string feature;
  std::int32_t category = 0;  // generator category index in [0, cardinality)

  std::string path() const;
  bool operator==(const AnomalyCondition&) const = default;
};

struct AnomalyRule {
  std::vector<AnomalyCondition> conjunction;
  double cost_delta = 0.0;

  bool operator==(const AnomalyRule&) const = default;
};

struct GenConfig {
  std::size_t n_records = 1000;
  std::uint64_t seed = 0;
  // "group.feature" -> number of categories; must agree with the schema.
  std::map<std::string, std::int32_t> cardinalities;
  std::pair<int, int> item_count_range{1, 4};
  std::pair<int, int> charge_count_range{0, 3};
  std::vector<AnomalyRule> anomaly_rules;
  double heuristic_noise_std = 0.0;

  // Throws ValidationError if the config is inconsistent with the schema.
  void validate(const FeatureSchema& schema) const;

  nlohmann::ordered_json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);

  bool operator==(const GenConfig&) const = default;
};

// Raw category string the generator emits for index k of a feature.
std::string category_name(const std::string& feature, std::int32_t k);

// Ground-truth cost function for one (config, schema) pair. Numerical
// features are drawn from U(0, 10); lookup constants and weights are drawn
// once from a stream derived from the config seed.
class CostOracle {
 public:
  CostOracle(const GenConfig& config, const FeatureSchema& schema);

  // base = w . dimension numericals + route lookups + service lookups
  //        + sum over items of item_handling + sum over charges of charge_amount
  double base_cost(const RateCard& card) const;
  double item_handling(const ValueVector& item) const;
  double charge_amount(const ValueVector& charge) const;
  double anomaly_delta(const RateCard& card) const;
  bool matches(const AnomalyRule& rule, const RateCard& card) const;
  double operator()(const RateCard& card) const { return base_cost(card) + anomaly_delta(card); }

  const FeatureSchema& schema() const { return schema_; }

 private:
  double lookup_sum(GroupId g, const ValueVector& values) const;
  double weighted_sum(GroupId g, const ValueVector& values) const;
  std::int32_t category_of(GroupId g, std::size_t feature, const FeatureValue& v) const;

  FeatureSchema schema_;
  std::vector<AnomalyRule> rules_;
  // [group][feature][category] lookup constants (empty for numericals).
  std::array<std::vector<std::vector<double>>, 5> lookup_;
  // [group][feature] numerical weights (0 for categoricals).
  std::array<std::vector<double>, 5> weight_;
};

double oracle_cost(const RateCard& card, const GenConfig& config, const FeatureSchema& schema);

// Deterministic in (config, schema); record k draws from its own stream
// derived from (seed, k).
Dataset generate(const GenConfig& config, const FeatureSchema& schema);

// Built-in benchmark: 50,000 records, seed 42, three anomaly rules of order
// 3, 4 and 5, heuristic noise std at 2% of the mean cost.
FeatureSchema synth_std_schema();
GenConfig synth_std_config();

}  // namespace rct
