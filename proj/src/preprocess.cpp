#include "rct/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rct/errors.hpp"

namespace rct {

CategoryMap::CategoryMap(std::vector<std::string> categories) : categories_(std::move(categories)) {
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (!index_.emplace(categories_[i], static_cast<std::int32_t>(i + 1)).second) {
      throw ValidationError("category map: duplicate category '" + categories_[i] + "'");
    }
  }
}

std::int32_t CategoryMap::encode(std::string_view category) const {
  auto it = index_.find(std::string(category));
  return it == index_.end() ? 0 : it->second;
}

const std::string& CategoryMap::decode(std::int32_t index) const {
  if (index < 1 || static_cast<std::size_t>(index) > categories_.size()) {
    throw std::out_of_range("category map: index " + std::to_string(index) + " has no category");
  }
  return categories_[static_cast<std::size_t>(index - 1)];
}

namespace {

// Streaming mean / population variance over a sequence of values.
struct Moments {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  NumericStats stats() const {
    if (n == 0) return {0.0, 0.0};
    return {mean, std::sqrt(m2 / n)};
  }
};

template <typename Visit>
void for_each_value_vector(const RateCard& card, GroupId g, Visit&& visit) {
  if (g == GroupId::item || g == GroupId::charge) {
    for (const auto& e : card.entries(g)) visit(e);
  } else {
    visit(card.fixed(g));
  }
}

}  // namespace

PreprocessState fit_preprocess(const Dataset& train) {
  if (train.records.empty()) throw std::invalid_argument("fit_preprocess: training set is empty");
  if (train.encoded()) throw StateError("fit_preprocess: dataset is already encoded");
  PreprocessState state;
  state.schema = train.schema;
  for (GroupId g : kAllGroups) {
    const auto& specs = train.schema.group(g);
    auto& encs = state.encoders[static_cast<std::size_t>(g)];
    for (std::size_t f = 0; f < specs.size(); ++f) {
      if (specs[f].kind == FeatureKind::categorical) {
        std::set<std::string> seen;
        for (const auto& r : train.records) {
          for_each_value_vector(r, g, [&](const ValueVector& v) { seen.insert(std::get<std::string>(v[f])); });
        }
        if (seen.size() > static_cast<std::size_t>(specs[f].cardinality)) {
          throw ValidationError(std::string(group_name(g)) + "." + specs[f].name + ": " + std::to_string(seen.size()) +
                                " distinct categories exceed cardinality " + std::to_string(specs[f].cardinality));
        }
        encs.emplace_back(CategoryMap(std::vector<std::string>(seen.begin(), seen.end())));
      } else {
        Moments m;
        for (const auto& r : train.records) {
          for_each_value_vector(r, g, [&](const ValueVector& v) { m.add(std::get<double>(v[f])); });
        }
        NumericStats s = m.stats();
        if (s.std < 1e-12 * std::max(1.0, std::abs(s.mean))) s.std = 0.0;
        encs.emplace_back(s);
      }
    }
  }
  Moments cost;
  for (const auto& r : train.records) {
    if (r.actual_cost) cost.add(*r.actual_cost);
  }
  if (cost.n == 0) throw ValidationError("fit_preprocess: no training record has an actual_cost");
  state.cost = cost.stats();
  if (state.cost.std <= 0.0) state.cost.std = 1.0;
  return state;
}

Dataset apply_preprocess(const Dataset& ds, std::shared_ptr<const PreprocessState> state) {
  if (ds.encoded()) throw StateError("apply_preprocess: dataset is already preprocessed");
  if (!state) throw std::invalid_argument("apply_preprocess: null state");
  if (!(ds.schema == state->schema)) throw CompatibilityError("apply_preprocess: dataset schema differs from state");
  Dataset out;
  out.schema = ds.schema;
  out.records = ds.records;
  auto encode_vector = [&](ValueVector& values, GroupId g) {
    const auto& encs = state->group(g);
    for (std::size_t f = 0; f < values.size(); ++f) {
      if (const auto* map = std::get_if<CategoryMap>(&encs[f])) {
        values[f] = map->encode(std::get<std::string>(values[f]));
      } else {
        values[f] = std::get<NumericStats>(encs[f]).standardize(std::get<double>(values[f]));
      }
    }
  };
  for (auto& r : out.records) {
    for (GroupId g : kFixedGroups) encode_vector(r.fixed(g), g);
    for (GroupId g : {GroupId::item, GroupId::charge}) {
      for (auto& e : r.entries(g)) encode_vector(e, g);
    }
  }
  out.preprocessing = std::move(state);
  return out;
}

nlohmann::ordered_json PreprocessState::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = schema.to_json();
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (GroupId g : kAllGroups) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& enc : group(g)) {
      nlohmann::ordered_json e;
      if (const auto* map = std::get_if<CategoryMap>(&enc)) {
        e["categories"] = map->categories();
      } else {
        const auto& s = std::get<NumericStats>(enc);
        e["mean"] = s.mean;
        e["std"] = s.std;
      }
      arr.push_back(std::move(e));
    }
    groups[std::string(group_name(g))] = std::move(arr);
  }
  j["encoders"] = std::move(groups);
  j["cost"] = {{"mean", cost.mean}, {"std", cost.std}};
  return j;
}

PreprocessState PreprocessState::from_json(const nlohmann::json& j) {
  PreprocessState s;
  try {
    s.schema = FeatureSchema::from_json(j.at("schema"));
    const auto& groups = j.at("encoders");
    for (GroupId g : kAllGroups) {
      const auto& arr = groups.at(std::string(group_name(g)));
      const auto& specs = s.schema.group(g);
      if (arr.size() != specs.size()) throw ValidationError("preprocess state: encoder count mismatch");
      auto& encs = s.encoders[static_cast<std::size_t>(g)];
      for (std::size_t f = 0; f < specs.size(); ++f) {
        if (specs[f].kind == FeatureKind::categorical) {
          encs.emplace_back(CategoryMap(arr[f].at("categories").get<std::vector<std::string>>()));
        } else {
          encs.emplace_back(NumericStats{arr[f].at("mean").get<double>(), arr[f].at("std").get<double>()});
        }
      }
    }
    s.cost = NumericStats{j.at("cost").at("mean").get<double>(), j.at("cost").at("std").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("preprocess state: ") + e.what());
  }
  return s;
}

}  // namespace rct
