#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rct/schema.hpp"

namespace rct {

// A raw category name, an encoded category index, or a number.
using FeatureValue = std::variant<std::string, std::int32_t, double>;
using ValueVector = std::vector<FeatureValue>;

struct RateCard {
  ValueVector dimension;
  ValueVector route;
  ValueVector service;
  std::vector<ValueVector> items;
  std::vector<ValueVector> charges;
  double heuristic_cost = 0.0;
  std::optional<double> actual_cost;

  const ValueVector& fixed(GroupId g) const;
  ValueVector& fixed(GroupId g);
  const std::vector<ValueVector>& entries(GroupId g) const;
  std::vector<ValueVector>& entries(GroupId g);

  bool operator==(const RateCard&) const = default;
};

struct PreprocessState;

struct Dataset {
  FeatureSchema schema;
  std::vector<RateCard> records;
  // Set once categorical values are encoded and numericals standardized.
  std::shared_ptr<const PreprocessState> preprocessing;

  bool encoded() const { return preprocessing != nullptr; }
  std::size_t size() const { return records.size(); }
};

// Throws ValidationError naming the offending field.
void validate_record(const RateCard& card, const FeatureSchema& schema);

RateCard parse_record(const nlohmann::json& j, const FeatureSchema& schema);
nlohmann::ordered_json record_to_json(const RateCard& card, const FeatureSchema& schema);

// JSON Lines, one record per line. Errors carry the 1-based line number.
Dataset load_dataset(const std::string& path, const FeatureSchema& schema);
void write_dataset(const Dataset& ds, const std::string& path);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Seeded random partition; sizes are round(train*N), round(val*N) and the rest.
DatasetSplit split_dataset(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);
Dataset head(const Dataset& ds, std::size_t n);

// Records with exactly the given list lengths.
Dataset filter_stratum(const Dataset& ds, std::size_t n_items, std::size_t n_charges);

}  // namespace rct
