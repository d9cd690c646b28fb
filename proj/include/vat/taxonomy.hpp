#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vat/error.hpp"

namespace vat {

using ValueId = std::string;
using MicroValueId = std::string;

struct Value {
  ValueId id;
  std::string label;
  double circumplex_angle = 0.0;  // degrees in [0, 360)

  bool operator==(const Value&) const = default;
};

struct MicroValue {
  MicroValueId id;
  std::string label;
  ValueId parent;

  bool operator==(const MicroValue&) const = default;
};

/// The value system: top-level values, micro-values, and the partition of
/// micro-values among values. Immutable once constructed.
class Taxonomy {
 public:
  Taxonomy() = default;

  /// Validates and indexes. Throws InputError on any invariant violation.
  Taxonomy(std::vector<Value> values, std::vector<MicroValue> micro_values)
      : values_(std::move(values)), micro_values_(std::move(micro_values)) {
    validate_and_index();
  }

  const std::vector<Value>& values() const noexcept { return values_; }
  const std::vector<MicroValue>& micro_values() const noexcept { return micro_values_; }
  std::size_t value_count() const noexcept { return values_.size(); }
  std::size_t micro_value_count() const noexcept { return micro_values_.size(); }

  bool has_value(std::string_view id) const { return value_index_.count(std::string(id)) != 0; }
  bool has_micro_value(std::string_view id) const {
    return micro_index_.count(std::string(id)) != 0;
  }

  std::size_t value_index(std::string_view id) const {
    auto it = value_index_.find(std::string(id));
    if (it == value_index_.end()) throw InputError("taxonomy", "unknown value id: " + std::string(id));
    return it->second;
  }

  std::size_t micro_value_index(std::string_view id) const {
    auto it = micro_index_.find(std::string(id));
    if (it == micro_index_.end()) {
      throw InputError("taxonomy", "unknown micro-value id: " + std::string(id));
    }
    return it->second;
  }

  const Value& value(std::string_view id) const { return values_[value_index(id)]; }
  const MicroValue& micro_value(std::string_view id) const {
    return micro_values_[micro_value_index(id)];
  }

  const ValueId& parent_of(std::string_view micro_id) const { return micro_value(micro_id).parent; }

  /// U(v), in micro-value list order.
  const std::vector<MicroValueId>& micro_values_of(std::string_view value_id) const {
    return assignment_[value_index(value_id)];
  }

  bool operator==(const Taxonomy& other) const {
    return values_ == other.values_ && micro_values_ == other.micro_values_;
  }

 private:
  void validate_and_index() {
    if (values_.empty()) throw InputError("taxonomy", "taxonomy has no values");
    std::set<double> angles;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const auto& v = values_[i];
      if (v.id.empty()) throw InputError("taxonomy", "value with empty id");
      if (!value_index_.emplace(v.id, i).second) {
        throw InputError("taxonomy", "duplicate value id: " + v.id);
      }
      if (!std::isfinite(v.circumplex_angle) || v.circumplex_angle < 0.0 ||
          v.circumplex_angle >= 360.0) {
        throw InputError("taxonomy", "angle for value " + v.id + " outside [0, 360)");
      }
      if (!angles.insert(v.circumplex_angle).second) {
        throw InputError("taxonomy", "duplicate circumplex angle for value " + v.id);
      }
    }
    assignment_.assign(values_.size(), {});
    for (std::size_t i = 0; i < micro_values_.size(); ++i) {
      const auto& m = micro_values_[i];
      if (m.id.empty()) throw InputError("taxonomy", "micro-value with empty id");
      if (!micro_index_.emplace(m.id, i).second) {
        throw InputError("taxonomy", "micro-value " + m.id + " is listed more than once");
      }
      if (m.parent.empty()) throw InputError("taxonomy", "micro-value " + m.id + " has no parent");
      auto parent = value_index_.find(m.parent);
      if (parent == value_index_.end()) {
        throw InputError("taxonomy", "micro-value " + m.id + " has unknown parent " + m.parent);
      }
      assignment_[parent->second].push_back(m.id);
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (assignment_[i].empty()) {
        throw InputError("taxonomy", "value " + values_[i].id + " has no micro-values");
      }
    }
  }

  std::vector<Value> values_;
  std::vector<MicroValue> micro_values_;
  std::unordered_map<std::string, std::size_t> value_index_;
  std::unordered_map<std::string, std::size_t> micro_index_;
  std::vector<std::vector<MicroValueId>> assignment_;
};

inline const std::vector<MicroValueId>& micro_values_of(const Taxonomy& t, std::string_view v) {
  return t.micro_values_of(v);
}

/// Value ids sorted ascending by circumplex angle.
inline std::vector<ValueId> circumplex_order(const Taxonomy& t) {
  std::vector<const Value*> sorted;
  for (const auto& v : t.values()) sorted.push_back(&v);
  std::stable_sort(sorted.begin(), sorted.end(), [](const Value* a, const Value* b) {
    return a->circumplex_angle < b->circumplex_angle;
  });
  std::vector<ValueId> out;
  out.reserve(sorted.size());
  for (const auto* v : sorted) out.push_back(v->id);
  return out;
}

// --- JSON document --------------------------------------------------------

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw InputError("taxonomy", where + ": missing or non-string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace detail

/// Builds a taxonomy from a document with `values` ({id, label, angle_deg})
/// and `micro_values` ({id, label, parent}). `parent` may also be a one-element
/// list; longer lists are rejected since membership is single-parent.
inline Taxonomy load_taxonomy(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("taxonomy", "taxonomy document must be an object");
  auto vals = doc.find("values");
  auto micros = doc.find("micro_values");
  if (vals == doc.end() || !vals->is_array()) {
    throw InputError("taxonomy", "taxonomy document needs a 'values' list");
  }
  if (micros == doc.end() || !micros->is_array()) {
    throw InputError("taxonomy", "taxonomy document needs a 'micro_values' list");
  }

  std::vector<Value> values;
  for (std::size_t i = 0; i < vals->size(); ++i) {
    const auto& jv = (*vals)[i];
    const std::string where = "values[" + std::to_string(i) + "]";
    if (!jv.is_object()) throw InputError("taxonomy", where + " is not an object");
    Value v;
    v.id = detail::require_string(jv, "id", where);
    v.label = jv.contains("label") && jv["label"].is_string() ? jv["label"].get<std::string>() : v.id;
    auto angle = jv.find("angle_deg");
    if (angle == jv.end() || !angle->is_number()) {
      throw InputError("taxonomy", where + ": malformed angle_deg");
    }
    v.circumplex_angle = angle->get<double>();
    values.push_back(std::move(v));
  }

  std::vector<MicroValue> micro_values;
  std::map<std::string, std::string> seen_parent;
  for (std::size_t i = 0; i < micros->size(); ++i) {
    const auto& jm = (*micros)[i];
    const std::string where = "micro_values[" + std::to_string(i) + "]";
    if (!jm.is_object()) throw InputError("taxonomy", where + " is not an object");
    MicroValue m;
    m.id = detail::require_string(jm, "id", where);
    m.label = jm.contains("label") && jm["label"].is_string() ? jm["label"].get<std::string>() : m.id;
    auto parent = jm.find("parent");
    if (parent == jm.end() || parent->is_null()) {
      throw InputError("taxonomy", "micro-value " + m.id + " has no parent");
    }
    if (parent->is_array()) {
      if (parent->size() > 1) throw InputError("taxonomy", "micro-value " + m.id + " has two or more parents");
      if (parent->empty() || !(*parent)[0].is_string()) {
        throw InputError("taxonomy", "micro-value " + m.id + " has no parent");
      }
      m.parent = (*parent)[0].get<std::string>();
    } else if (parent->is_string()) {
      m.parent = parent->get<std::string>();
    } else {
      throw InputError("taxonomy", "micro-value " + m.id + ": parent must be a value id");
    }
    auto [it, inserted] = seen_parent.emplace(m.id, m.parent);
    if (!inserted && it->second != m.parent) {
      throw InputError("taxonomy", "micro-value " + m.id + " is assigned to two values (" +
                                       it->second + ", " + m.parent + ")");
    }
    micro_values.push_back(std::move(m));
  }
  return Taxonomy(std::move(values), std::move(micro_values));
}

inline nlohmann::json to_json(const Taxonomy& t) {
  nlohmann::json doc;
  doc["values"] = nlohmann::json::array();
  for (const auto& v : t.values()) {
    doc["values"].push_back({{"id", v.id}, {"label", v.label}, {"angle_deg", v.circumplex_angle}});
  }
  doc["micro_values"] = nlohmann::json::array();
  for (const auto& m : t.micro_values()) {
    doc["micro_values"].push_back({{"id", m.id}, {"label", m.label}, {"parent", m.parent}});
  }
  return doc;
}

/// Ten Schwartz values in circumplex order at 36 degree spacing, with 56
/// placeholder micro-values (six each for the first six values, five for the
/// rest). Micro-value labels are placeholders; real label sets are data.
inline Taxonomy default_taxonomy() {
  struct Seed {
    const char* id;
    const char* label;
    int micro_count;
  };
  static constexpr Seed kSeeds[] = {
      {"self_direction", "Self-Direction", 6}, {"stimulation", "Stimulation", 6},
      {"hedonism", "Hedonism", 6},             {"achievement", "Achievement", 6},
      {"power", "Power", 6},                   {"security", "Security", 6},
      {"conformity", "Conformity", 5},         {"tradition", "Tradition", 5},
      {"benevolence", "Benevolence", 5},       {"universalism", "Universalism", 5},
  };
  std::vector<Value> values;
  std::vector<MicroValue> micro;
  for (std::size_t i = 0; i < std::size(kSeeds); ++i) {
    const auto& s = kSeeds[i];
    values.push_back({s.id, s.label, 36.0 * static_cast<double>(i)});
    for (int k = 1; k <= s.micro_count; ++k) {
      micro.push_back({std::string(s.id) + "." + std::to_string(k),
                       std::string(s.label) + " facet " + std::to_string(k), s.id});
    }
  }
  return Taxonomy(std::move(values), std::move(micro));
}

}  // namespace vat
