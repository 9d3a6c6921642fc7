#include "rct/schema.hpp"

#include <fstream>
#include <set>

#include "rct/errors.hpp"

namespace rct {

std::string_view group_name(GroupId g) {
  switch (g) {
    case GroupId::dimension: return "dimension";
    case GroupId::route: return "route";
    case GroupId::service: return "service";
    case GroupId::item: return "item";
    case GroupId::charge: return "charge";
  }
  return "?";
}

std::string_view record_key(GroupId g) {
  switch (g) {
    case GroupId::item: return "items";
    case GroupId::charge: return "charges";
    default: return group_name(g);
  }
}

std::optional<GroupId> parse_group(std::string_view name) {
  for (GroupId g : kAllGroups) {
    if (name == group_name(g) || name == record_key(g)) return g;
  }
  return std::nullopt;
}

std::optional<std::size_t> FeatureSchema::find(GroupId g, std::string_view name) const {
  const auto& feats = group(g);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::fixed_feature_count() const {
  std::size_t n = 0;
  for (GroupId g : kFixedGroups) n += group(g).size();
  return n;
}

void FeatureSchema::validate() const {
  for (GroupId g : kAllGroups) {
    const auto& feats = group(g);
    if (feats.empty()) {
      throw ValidationError("schema: group '" + std::string(group_name(g)) + "' has no features");
    }
    std::set<std::string> seen;
    for (const auto& f : feats) {
      if (f.name.empty()) throw ValidationError("schema: empty feature name in " + std::string(group_name(g)));
      if (!seen.insert(f.name).second) {
        throw ValidationError("schema: duplicate feature '" + f.name + "' in " + std::string(group_name(g)));
      }
      if (f.kind == FeatureKind::categorical && f.cardinality < 1) {
        throw ValidationError("schema: categorical feature '" + f.name + "' needs cardinality >= 1");
      }
      if (f.kind == FeatureKind::numerical && f.cardinality != 0) {
        throw ValidationError("schema: numerical feature '" + f.name + "' cannot have a cardinality");
      }
    }
  }
}

nlohmann::ordered_json FeatureSchema::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (GroupId g : kAllGroups) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : group(g)) {
      nlohmann::ordered_json e;
      e["name"] = f.name;
      e["kind"] = f.kind == FeatureKind::categorical ? "categorical" : "numerical";
      if (f.kind == FeatureKind::categorical) e["cardinality"] = f.cardinality;
      arr.push_back(std::move(e));
    }
    j[std::string(group_name(g))] = std::move(arr);
  }
  return j;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("schema: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    auto g = parse_group(key);
    if (!g || key != group_name(*g)) throw ValidationError("schema: unknown group '" + key + "'");
  }
  FeatureSchema s;
  for (GroupId g : kAllGroups) {
    const std::string name(group_name(g));
    if (!j.contains(name)) throw ValidationError("schema: missing group '" + name + "'");
    const auto& arr = j.at(name);
    if (!arr.is_array()) throw ValidationError("schema: group '" + name + "' must be an array");
    for (const auto& e : arr) {
      if (!e.is_object() || !e.contains("name") || !e.contains("kind")) {
        throw ValidationError("schema: feature entries in '" + name + "' need 'name' and 'kind'");
      }
      FeatureSpec f;
      f.name = e.at("name").get<std::string>();
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "categorical") {
        f.kind = FeatureKind::categorical;
        if (!e.contains("cardinality")) {
          throw ValidationError("schema: categorical feature '" + f.name + "' is missing 'cardinality'");
        }
        f.cardinality = e.at("cardinality").get<std::int32_t>();
      } else if (kind == "numerical") {
        f.kind = FeatureKind::numerical;
        if (e.contains("cardinality")) {
          throw ValidationError("schema: numerical feature '" + f.name + "' cannot have a cardinality");
        }
      } else {
        throw ValidationError("schema: feature '" + f.name + "' has unknown kind '" + kind + "'");
      }
      s.group(g).push_back(std::move(f));
    }
  }
  s.validate();
  return s;
}

FeatureSchema FeatureSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open schema file '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("schema file '" + path + "': " + e.what());
  }
}

void FeatureSchema::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write schema file '" + path + "'");
  out << to_json().dump(2) << "\n";
}

}  // namespace rct
