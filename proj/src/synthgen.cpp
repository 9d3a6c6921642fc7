#include "rct/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

#include "rct/errors.hpp"

namespace rct {

namespace {

constexpr double kNumericalLow = 0.0;
constexpr double kNumericalHigh = 10.0;

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kTableStream = 1;
constexpr std::uint64_t kRecordStream = 2;

std::string feature_path(GroupId g, const std::string& feature) {
  return std::string(group_name(g)) + "." + feature;
}

AnomalyCondition parse_condition(const nlohmann::json& j) {
  const auto path = j.at("feature").get<std::string>();
  const auto dot = path.find('.');
  if (dot == std::string::npos) throw ValidationError("anomaly rule: feature path '" + path + "' needs group.feature");
  auto g = parse_group(path.substr(0, dot));
  if (!g) throw ValidationError("anomaly rule: unknown group in '" + path + "'");
  return AnomalyCondition{*g, path.substr(dot + 1), j.at("category").get<std::int32_t>()};
}

}  // namespace

std::string AnomalyCondition::path() const { return feature_path(group, feature); }

std::string category_name(const std::string& feature, std::int32_t k) { return feature + "_" + std::to_string(k); }

void GenConfig::validate(const FeatureSchema& schema) const {
  schema.validate();
  if (n_records == 0) throw ValidationError("generator: n_records must be positive");
  if (item_count_range.first < 1 || item_count_range.second < item_count_range.first) {
    throw ValidationError("generator: item_count_range must satisfy 1 <= min <= max");
  }
  if (charge_count_range.first < 0 || charge_count_range.second < charge_count_range.first) {
    throw ValidationError("generator: charge_count_range must satisfy 0 <= min <= max");
  }
  if (!std::isfinite(heuristic_noise_std) || heuristic_noise_std < 0) {
    throw ValidationError("generator: heuristic_noise_std must be finite and non-negative");
  }
  std::size_t categorical = 0;
  for (GroupId g : kAllGroups) {
    for (const auto& f : schema.group(g)) {
      if (f.kind != FeatureKind::categorical) continue;
      ++categorical;
      auto it = cardinalities.find(feature_path(g, f.name));
      if (it == cardinalities.end() || it->second != f.cardinality) {
        throw ValidationError("generator: cardinality of " + feature_path(g, f.name) + " disagrees with schema");
      }
    }
  }
  if (cardinalities.size() != categorical) {
    throw ValidationError("generator: cardinalities name features that are not categorical in the schema");
  }
  for (const auto& rule : anomaly_rules) {
    if (rule.conjunction.size() < 3) throw ValidationError("generator: anomaly rules need order >= 3");
    if (!std::isfinite(rule.cost_delta)) throw ValidationError("generator: anomaly cost_delta must be finite");
    for (const auto& c : rule.conjunction) {
      auto idx = schema.find(c.group, c.feature);
      if (!idx) throw ValidationError("generator: anomaly rule references unknown feature " + c.path());
      const auto& spec = schema.group(c.group)[*idx];
      if (spec.kind != FeatureKind::categorical) {
        throw ValidationError("generator: anomaly rule references numerical feature " + c.path());
      }
      if (c.category < 0 || c.category >= spec.cardinality) {
        throw ValidationError("generator: anomaly category out of range for " + c.path());
      }
    }
  }
}

nlohmann::ordered_json GenConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_records"] = n_records;
  j["seed"] = seed;
  j["cardinalities"] = nlohmann::ordered_json(cardinalities);
  j["item_count_range"] = {item_count_range.first, item_count_range.second};
  j["charge_count_range"] = {charge_count_range.first, charge_count_range.second};
  auto rules = nlohmann::ordered_json::array();
  for (const auto& r : anomaly_rules) {
    nlohmann::ordered_json jr;
    auto conj = nlohmann::ordered_json::array();
    for (const auto& c : r.conjunction) conj.push_back({{"feature", c.path()}, {"category", c.category}});
    jr["conjunction"] = std::move(conj);
    jr["cost_delta"] = r.cost_delta;
    rules.push_back(std::move(jr));
  }
  j["anomaly_rules"] = std::move(rules);
  j["heuristic_noise_std"] = heuristic_noise_std;
  return j;
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  static const std::array<const char*, 7> kKeys = {"n_records",          "seed",          "cardinalities",
                                                   "item_count_range",   "charge_count_range",
                                                   "anomaly_rules",      "heuristic_noise_std"};
  if (!j.is_object()) throw ValidationError("generator config: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ValidationError("generator config: unknown key '" + key + "'");
    }
  }
  GenConfig c;
  try {
    c.n_records = j.at("n_records").get<std::size_t>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.cardinalities = j.at("cardinalities").get<std::map<std::string, std::int32_t>>();
    if (j.contains("item_count_range")) {
      c.item_count_range = {j.at("item_count_range").at(0).get<int>(), j.at("item_count_range").at(1).get<int>()};
    }
    if (j.contains("charge_count_range")) {
      c.charge_count_range = {j.at("charge_count_range").at(0).get<int>(),
                              j.at("charge_count_range").at(1).get<int>()};
    }
    for (const auto& jr : j.value("anomaly_rules", nlohmann::json::array())) {
      AnomalyRule r;
      for (const auto& jc : jr.at("conjunction")) r.conjunction.push_back(parse_condition(jc));
      r.cost_delta = jr.at("cost_delta").get<double>();
      c.anomaly_rules.push_back(std::move(r));
    }
    c.heuristic_noise_std = j.value("heuristic_noise_std", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("generator config: ") + e.what());
  }
  return c;
}

CostOracle::CostOracle(const GenConfig& config, const FeatureSchema& schema)
    : schema_(schema), rules_(config.anomaly_rules) {
  config.validate(schema);
  auto rng = make_stream(config.seed, kTableStream, 0);
  std::uniform_real_distribution<double> lookup(1.0, 5.0);
  std::uniform_real_distribution<double> weight(0.1, 0.6);
  for (GroupId g : kAllGroups) {
    const auto gi = static_cast<std::size_t>(g);
    for (const auto& f : schema.group(g)) {
      std::vector<double> table;
      double w = 0.0;
      if (f.kind == FeatureKind::categorical) {
        for (std::int32_t k = 0; k < f.cardinality; ++k) table.push_back(lookup(rng));
      } else {
        w = weight(rng);
      }
      lookup_[gi].push_back(std::move(table));
      weight_[gi].push_back(w);
    }
  }
}

std::int32_t CostOracle::category_of(GroupId g, std::size_t feature, const FeatureValue& v) const {
  const auto& spec = schema_.group(g)[feature];
  const auto* raw = std::get_if<std::string>(&v);
  if (raw == nullptr) throw ValidationError("oracle: " + feature_path(g, spec.name) + " must be a raw category");
  const std::string prefix = spec.name + "_";
  std::int32_t k = -1;
  if (raw->size() > prefix.size() && raw->compare(0, prefix.size(), prefix) == 0) {
    const char* b = raw->data() + prefix.size();
    const char* e = raw->data() + raw->size();
    auto [p, ec] = std::from_chars(b, e, k);
    if (ec != std::errc() || p != e) k = -1;
  }
  if (k < 0 || k >= spec.cardinality) {
    throw ValidationError("oracle: '" + *raw + "' is not a generated category of " + feature_path(g, spec.name));
  }
  return k;
}

double CostOracle::lookup_sum(GroupId g, const ValueVector& values) const {
  const auto gi = static_cast<std::size_t>(g);
  double s = 0.0;
  for (std::size_t f = 0; f < values.size(); ++f) {
    if (!lookup_[gi][f].empty()) s += lookup_[gi][f][static_cast<std::size_t>(category_of(g, f, values[f]))];
  }
  return s;
}

double CostOracle::weighted_sum(GroupId g, const ValueVector& values) const {
  const auto gi = static_cast<std::size_t>(g);
  double s = 0.0;
  for (std::size_t f = 0; f < values.size(); ++f) {
    if (weight_[gi][f] != 0.0) s += weight_[gi][f] * std::get<double>(values[f]);
  }
  return s;
}

double CostOracle::item_handling(const ValueVector& item) const {
  return lookup_sum(GroupId::item, item) + weighted_sum(GroupId::item, item);
}

double CostOracle::charge_amount(const ValueVector& charge) const {
  return lookup_sum(GroupId::charge, charge) + weighted_sum(GroupId::charge, charge);
}

double CostOracle::base_cost(const RateCard& card) const {
  double c = weighted_sum(GroupId::dimension, card.dimension);
  c += lookup_sum(GroupId::route, card.route);
  c += lookup_sum(GroupId::service, card.service);
  for (const auto& item : card.items) c += item_handling(item);
  for (const auto& charge : card.charges) c += charge_amount(charge);
  return c;
}

bool CostOracle::matches(const AnomalyRule& rule, const RateCard& card) const {
  for (const auto& cond : rule.conjunction) {
    const std::size_t f = *schema_.find(cond.group, cond.feature);
    bool hit = false;
    if (cond.group == GroupId::item || cond.group == GroupId::charge) {
      for (const auto& e : card.entries(cond.group)) {
        if (category_of(cond.group, f, e[f]) == cond.category) {
          hit = true;
          break;
        }
      }
    } else {
      hit = category_of(cond.group, f, card.fixed(cond.group)[f]) == cond.category;
    }
    if (!hit) return false;
  }
  return true;
}

double CostOracle::anomaly_delta(const RateCard& card) const {
  double d = 0.0;
  for (const auto& rule : rules_) {
    if (matches(rule, card)) d += rule.cost_delta;
  }
  return d;
}

double oracle_cost(const RateCard& card, const GenConfig& config, const FeatureSchema& schema) {
  return CostOracle(config, schema)(card);
}

Dataset generate(const GenConfig& config, const FeatureSchema& schema) {
  const CostOracle oracle(config, schema);
  Dataset ds;
  ds.schema = schema;
  ds.records.reserve(config.n_records);
  std::uniform_real_distribution<double> numerical(kNumericalLow, kNumericalHigh);

  auto draw_values = [&](GroupId g, std::mt19937_64& rng) {
    ValueVector v;
    for (const auto& f : schema.group(g)) {
      if (f.kind == FeatureKind::categorical) {
        std::uniform_int_distribution<std::int32_t> cat(0, f.cardinality - 1);
        v.emplace_back(category_name(f.name, cat(rng)));
      } else {
        v.emplace_back(numerical(rng));
      }
    }
    return v;
  };

  for (std::size_t k = 0; k < config.n_records; ++k) {
    auto rng = make_stream(config.seed, kRecordStream, k);
    RateCard card;
    for (GroupId g : kFixedGroups) card.fixed(g) = draw_values(g, rng);
    std::uniform_int_distribution<int> n_items(config.item_count_range.first, config.item_count_range.second);
    std::uniform_int_distribution<int> n_charges(config.charge_count_range.first, config.charge_count_range.second);
    const int ni = n_items(rng);
    const int nc = n_charges(rng);
    for (int i = 0; i < ni; ++i) card.items.push_back(draw_values(GroupId::item, rng));
    for (int i = 0; i < nc; ++i) card.charges.push_back(draw_values(GroupId::charge, rng));
    const double base = oracle.base_cost(card);
    double noise = 0.0;
    if (config.heuristic_noise_std > 0) {
      std::normal_distribution<double> gauss(0.0, config.heuristic_noise_std);
      noise = gauss(rng);
    }
    card.heuristic_cost = base + noise;
    card.actual_cost = base + oracle.anomaly_delta(card);
    ds.records.push_back(std::move(card));
  }
  return ds;
}

FeatureSchema synth_std_schema() {
  using K = FeatureKind;
  FeatureSchema s;
  s.group(GroupId::dimension) = {{"weight", K::numerical, 0},
                                 {"volume", K::numerical, 0},
                                 {"size_class", K::categorical, 3},
                                 {"packaging", K::categorical, 2}};
  s.group(GroupId::route) = {{"distance", K::numerical, 0},
                             {"origin_region", K::categorical, 4},
                             {"dest_region", K::categorical, 4}};
  s.group(GroupId::service) = {{"carrier", K::categorical, 3},
                               {"service_level", K::categorical, 2},
                               {"fuel_index", K::numerical, 0}};
  s.group(GroupId::item) = {{"unit_weight", K::numerical, 0},
                            {"declared_value", K::numerical, 0},
                            {"hazmat_class", K::categorical, 2},
                            {"product_category", K::categorical, 4}};
  s.group(GroupId::charge) = {{"amount", K::numerical, 0}, {"charge_type", K::categorical, 3}};
  return s;
}

GenConfig synth_std_config() {
  const FeatureSchema schema = synth_std_schema();
  GenConfig c;
  c.n_records = 50000;
  c.seed = 42;
  for (GroupId g : kAllGroups) {
    for (const auto& f : schema.group(g)) {
      if (f.kind == FeatureKind::categorical) c.cardinalities[feature_path(g, f.name)] = f.cardinality;
    }
  }
  c.item_count_range = {1, 4};
  c.charge_count_range = {0, 3};
  using G = GroupId;
  c.anomaly_rules = {
      {{{G::dimension, "size_class", 2}, {G::item, "hazmat_class", 1}, {G::service, "carrier", 1}}, 12.0},
      {{{G::route, "origin_region", 0},
        {G::route, "dest_region", 3},
        {G::service, "service_level", 1},
        {G::dimension, "packaging", 0}},
       15.0},
      {{{G::dimension, "size_class", 0},
        {G::service, "carrier", 2},
        {G::item, "product_category", 3},
        {G::charge, "charge_type", 2},
        {G::service, "service_level", 0}},
       18.0},
  };
  c.heuristic_noise_std = 1.07;
  return c;
}

}  // namespace rct
