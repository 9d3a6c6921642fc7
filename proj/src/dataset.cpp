#include "rct/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "rct/errors.hpp"

namespace rct {

const ValueVector& RateCard::fixed(GroupId g) const {
  switch (g) {
    case GroupId::dimension: return dimension;
    case GroupId::route: return route;
    case GroupId::service: return service;
    default: throw std::invalid_argument("not a fixed-length group: " + std::string(group_name(g)));
  }
}

ValueVector& RateCard::fixed(GroupId g) {
  return const_cast<ValueVector&>(std::as_const(*this).fixed(g));
}

const std::vector<ValueVector>& RateCard::entries(GroupId g) const {
  switch (g) {
    case GroupId::item: return items;
    case GroupId::charge: return charges;
    default: throw std::invalid_argument("not a variable-length group: " + std::string(group_name(g)));
  }
}

std::vector<ValueVector>& RateCard::entries(GroupId g) {
  return const_cast<std::vector<ValueVector>&>(std::as_const(*this).entries(g));
}

namespace {

void validate_values(const ValueVector& values, const std::vector<FeatureSpec>& specs, const std::string& where) {
  if (values.size() != specs.size()) {
    throw ValidationError(where + ": expected " + std::to_string(specs.size()) + " features, got " +
                          std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    const auto& v = values[i];
    const std::string field = where + "." + spec.name;
    if (spec.kind == FeatureKind::numerical) {
      const double* x = std::get_if<double>(&v);
      if (x == nullptr) throw ValidationError(field + ": expected a number");
      if (!std::isfinite(*x)) throw ValidationError(field + ": value is not finite");
    } else if (const auto* idx = std::get_if<std::int32_t>(&v)) {
      if (*idx < 0 || *idx > spec.cardinality) {
        throw ValidationError(field + ": encoded index " + std::to_string(*idx) + " outside [0, " +
                              std::to_string(spec.cardinality) + "]");
      }
    } else if (!std::holds_alternative<std::string>(v)) {
      throw ValidationError(field + ": expected a category string");
    }
  }
}

ValueVector parse_values(const nlohmann::json& obj, const std::vector<FeatureSpec>& specs, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  if (obj.size() != specs.size()) {
    for (const auto& [key, _] : obj.items()) {
      bool known = std::any_of(specs.begin(), specs.end(), [&](const FeatureSpec& s) { return s.name == key; });
      if (!known) throw ValidationError(where + "." + key + ": unknown field");
    }
  }
  ValueVector out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    const std::string field = where + "." + spec.name;
    auto it = obj.find(spec.name);
    if (it == obj.end()) throw ValidationError(field + ": missing field");
    if (spec.kind == FeatureKind::numerical) {
      if (!it->is_number()) throw ValidationError(field + ": expected a number");
      out.emplace_back(it->get<double>());
    } else {
      if (!it->is_string()) throw ValidationError(field + ": expected a category string");
      out.emplace_back(it->get<std::string>());
    }
  }
  return out;
}

nlohmann::ordered_json values_to_json(const ValueVector& values, const std::vector<FeatureSpec>& specs) {
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::visit([&](const auto& v) { obj[specs[i].name] = v; }, values[i]);
  }
  return obj;
}

}  // namespace

void validate_record(const RateCard& card, const FeatureSchema& schema) {
  for (GroupId g : kFixedGroups) validate_values(card.fixed(g), schema.group(g), std::string(group_name(g)));
  if (card.items.empty()) throw ValidationError("items: n^i >= 1 violated");
  for (GroupId g : {GroupId::item, GroupId::charge}) {
    const auto& entries = card.entries(g);
    for (std::size_t k = 0; k < entries.size(); ++k) {
      validate_values(entries[k], schema.group(g), std::string(record_key(g)) + "[" + std::to_string(k) + "]");
    }
  }
  if (!std::isfinite(card.heuristic_cost)) throw ValidationError("heuristic_cost: value is not finite");
  if (card.actual_cost && !std::isfinite(*card.actual_cost)) {
    throw ValidationError("actual_cost: value is not finite");
  }
}

RateCard parse_record(const nlohmann::json& j, const FeatureSchema& schema) {
  if (!j.is_object()) throw ValidationError("record: expected a JSON object");
  static const std::array<const char*, 7> kKeys = {"dimension", "route",          "service",    "items",
                                                   "charges",   "heuristic_cost", "actual_cost"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ValidationError(key + ": unknown field");
    }
  }
  RateCard card;
  for (GroupId g : kFixedGroups) {
    const std::string key(record_key(g));
    if (!j.contains(key)) throw ValidationError(key + ": missing field");
    card.fixed(g) = parse_values(j.at(key), schema.group(g), key);
  }
  for (GroupId g : {GroupId::item, GroupId::charge}) {
    const std::string key(record_key(g));
    if (!j.contains(key)) throw ValidationError(key + ": missing field");
    const auto& arr = j.at(key);
    if (!arr.is_array()) throw ValidationError(key + ": expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      card.entries(g).push_back(parse_values(arr[k], schema.group(g), key + "[" + std::to_string(k) + "]"));
    }
  }
  if (!j.contains("heuristic_cost") || !j.at("heuristic_cost").is_number()) {
    throw ValidationError("heuristic_cost: missing or not a number");
  }
  card.heuristic_cost = j.at("heuristic_cost").get<double>();
  if (j.contains("actual_cost") && !j.at("actual_cost").is_null()) {
    if (!j.at("actual_cost").is_number()) throw ValidationError("actual_cost: expected a number or null");
    card.actual_cost = j.at("actual_cost").get<double>();
  }
  validate_record(card, schema);
  return card;
}

nlohmann::ordered_json record_to_json(const RateCard& card, const FeatureSchema& schema) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (GroupId g : kFixedGroups) j[std::string(record_key(g))] = values_to_json(card.fixed(g), schema.group(g));
  for (GroupId g : {GroupId::item, GroupId::charge}) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : card.entries(g)) arr.push_back(values_to_json(e, schema.group(g)));
    j[std::string(record_key(g))] = std::move(arr);
  }
  j["heuristic_cost"] = card.heuristic_cost;
  if (card.actual_cost) {
    j["actual_cost"] = *card.actual_cost;
  } else {
    j["actual_cost"] = nullptr;
  }
  return j;
}

Dataset load_dataset(const std::string& path, const FeatureSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  Dataset ds;
  ds.schema = schema;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    try {
      ds.records.push_back(parse_record(j, schema));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  if (ds.encoded()) throw StateError("write_dataset: only raw (unencoded) datasets can be written");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
  for (const auto& r : ds.records) out << record_to_json(r, ds.schema).dump() << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

DatasetSplit split_dataset(const Dataset& ds, const SplitFractions& f, std::uint64_t seed) {
  if (!(f.train > 0 && f.val > 0 && f.test > 0)) throw std::invalid_argument("split: fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw std::invalid_argument("split: a partition of " + std::to_string(n) + " records would be empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const std::size_t> all(order);
  return DatasetSplit{subset(ds, all.subspan(0, n_train)), subset(ds, all.subspan(n_train, n_val)),
                      subset(ds, all.subspan(n_train + n_val))};
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.schema = ds.schema;
  out.preprocessing = ds.preprocessing;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(ds.records.at(i));
  return out;
}

Dataset head(const Dataset& ds, std::size_t n) {
  if (n > ds.size()) {
    throw std::invalid_argument("head: requested " + std::to_string(n) + " of " + std::to_string(ds.size()) +
                                " records");
  }
  Dataset out;
  out.schema = ds.schema;
  out.preprocessing = ds.preprocessing;
  out.records.assign(ds.records.begin(), ds.records.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Dataset filter_stratum(const Dataset& ds, std::size_t n_items, std::size_t n_charges) {
  Dataset out;
  out.schema = ds.schema;
  out.preprocessing = ds.preprocessing;
  for (const auto& r : ds.records) {
    if (r.items.size() == n_items && r.charges.size() == n_charges) out.records.push_back(r);
  }
  return out;
}

}  // namespace rct
