#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rct {

enum class FeatureKind { categorical, numerical };

enum class GroupId : std::uint8_t { dimension = 0, route = 1, service = 2, item = 3, charge = 4 };

inline constexpr std::array<GroupId, 5> kAllGroups = {GroupId::dimension, GroupId::route, GroupId::service,
                                                      GroupId::item, GroupId::charge};
inline constexpr std::array<GroupId, 3> kFixedGroups = {GroupId::dimension, GroupId::route, GroupId::service};

// Name used in schema files and as the record key ("items"/"charges" for the
// list groups in records, singular in the schema).
std::string_view group_name(GroupId g);
std::string_view record_key(GroupId g);
std::optional<GroupId> parse_group(std::string_view name);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;
  // Known categories, excluding the reserved unknown slot. Zero for numerical.
  std::int32_t cardinality = 0;

  bool operator==(const FeatureSpec&) const = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;

  std::vector<FeatureSpec>& group(GroupId g) { return groups_[static_cast<std::size_t>(g)]; }
  const std::vector<FeatureSpec>& group(GroupId g) const { return groups_[static_cast<std::size_t>(g)]; }

  // Index of a feature by name within a group, if present.
  std::optional<std::size_t> find(GroupId g, std::string_view name) const;

  // Sum of feature counts of the three fixed-length groups.
  std::size_t fixed_feature_count() const;

  // Throws ValidationError on empty groups, duplicate names, bad cardinality.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  static FeatureSchema load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::array<std::vector<FeatureSpec>, 5> groups_;
};

}  // namespace rct
