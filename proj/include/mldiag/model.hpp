#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "mldiag/error.hpp"
#include "mldiag/features.hpp"
#include "mldiag/ids.hpp"
#include "mldiag/json_util.hpp"

namespace mldiag {

// ---------------------------------------------------------------------------
// Behavioral knowledge
// ---------------------------------------------------------------------------

enum class TrendDirection { kIncreasing, kDecreasing, kEither, kNoChange };

inline constexpr std::string_view direction_name(TrendDirection d) {
  switch (d) {
    case TrendDirection::kIncreasing: return "increasing";
    case TrendDirection::kDecreasing: return "decreasing";
    case TrendDirection::kEither: return "either";
    case TrendDirection::kNoChange: return "no_change";
  }
  return "?";
}

inline std::optional<TrendDirection> parse_direction(std::string_view s) {
  for (auto d : {TrendDirection::kIncreasing, TrendDirection::kDecreasing,
                 TrendDirection::kEither, TrendDirection::kNoChange})
    if (direction_name(d) == s) return d;
  return std::nullopt;
}

// Expected movement of one feature under one failure type, with the
// weight / slope / cutoff that shape its evidential curve.
struct TrendSpec {
  TrendDirection direction = TrendDirection::kIncreasing;
  double weight = 1.0;  // (0, 1]
  double slope = 1.0;   // > 0
  double cutoff = 0.0;  // finite

  bool valid() const {
    return weight > 0.0 && weight <= 1.0 && slope > 0.0 && std::isfinite(slope) &&
           std::isfinite(cutoff);
  }

  friend bool operator==(const TrendSpec&, const TrendSpec&) = default;
};

// Role "any" selects every dependent probe; any other role selects the
// dependent probes whose kind tag equals it.
inline constexpr std::string_view kAnyProbeRole = "any";

struct BehaviorEntry {
  std::string component_class;
  std::string failure_type;
  Feature feature = Feature::kMean;
  std::string probe_role;
  TrendSpec trend;

  friend bool operator==(const BehaviorEntry&, const BehaviorEntry&) = default;
};

inline bool role_matches(std::string_view role, std::string_view probe_kind) {
  return role == kAnyProbeRole || role == probe_kind;
}

class BehavioralModel {
 public:
  using Key = std::pair<std::string, std::string>;  // (class, failure type)

  BehavioralModel() = default;

  explicit BehavioralModel(std::vector<BehaviorEntry> entries, std::map<Key, double> priors = {})
      : entries_(std::move(entries)), priors_(std::move(priors)) {
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
      return std::tie(a.component_class, a.failure_type, a.feature, a.probe_role) <
             std::tie(b.component_class, b.failure_type, b.feature, b.probe_role);
    });
    for (std::size_t i = 0; i < entries_.size();) {
      std::size_t j = i;
      while (j < entries_.size() && entries_[j].component_class == entries_[i].component_class &&
             entries_[j].failure_type == entries_[i].failure_type)
        ++j;
      index_[{entries_[i].component_class, entries_[i].failure_type}] = {i, j};
      i = j;
    }
  }

  const std::vector<BehaviorEntry>& entries() const noexcept { return entries_; }

  std::span<const BehaviorEntry> entries_for(std::string_view cls, std::string_view failure) const {
    auto it = index_.find(Key{std::string(cls), std::string(failure)});
    if (it == index_.end()) return {};
    return std::span<const BehaviorEntry>(entries_).subspan(it->second.first,
                                                           it->second.second - it->second.first);
  }

  std::optional<double> prior(std::string_view cls, std::string_view failure) const {
    auto it = priors_.find(Key{std::string(cls), std::string(failure)});
    if (it == priors_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<Key, double>& priors() const noexcept { return priors_; }

  friend bool operator==(const BehavioralModel& a, const BehavioralModel& b) {
    return a.entries_ == b.entries_ && a.priors_ == b.priors_;
  }

 private:
  std::vector<BehaviorEntry> entries_;
  std::map<Key, double> priors_;
  std::map<Key, std::pair<std::size_t, std::size_t>> index_;
};

// ---------------------------------------------------------------------------
// Structural knowledge
// ---------------------------------------------------------------------------

struct ComponentClass {
  std::string name;
  std::vector<std::string> failure_types;  // sorted, unique, nonempty

  bool has_failure_type(std::string_view f) const {
    return std::binary_search(failure_types.begin(), failure_types.end(), f);
  }

  friend bool operator==(const ComponentClass&, const ComponentClass&) = default;
};

struct ComponentSpec {
  ComponentId id;
  std::string component_class;
  friend bool operator==(const ComponentSpec&, const ComponentSpec&) = default;
};

struct ProbeSpec {
  ProbeId id;
  std::string kind;
  friend bool operator==(const ProbeSpec&, const ProbeSpec&) = default;
};

struct Diagnostic {
  enum class Severity { kWarning, kError };
  Severity severity = Severity::kWarning;
  std::string code;
  std::string message;

  bool is_error() const noexcept { return severity == Severity::kError; }
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

using DependencyMap = std::map<ComponentId, std::vector<ProbeId>>;

// Components, probes and the flat component -> dependent-probe map, stored
// in both directions. Everything is sorted by id; index-based accessors are
// the fast path used by the reasoning levels. Immutable after construction.
class DetectorModel {
 public:
  DetectorModel() = default;

  DetectorModel(std::vector<ComponentSpec> components, std::vector<ProbeSpec> probes,
                const DependencyMap& depends, std::vector<ComponentClass> classes,
                BehavioralModel behavior = {})
      : components_(std::move(components)),
        probes_(std::move(probes)),
        classes_(std::move(classes)),
        behavior_(std::move(behavior)) {
    using K = ModelError::Kind;
    auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
    std::sort(components_.begin(), components_.end(), by_id);
    std::sort(probes_.begin(), probes_.end(), by_id);
    std::sort(classes_.begin(), classes_.end(),
              [](const auto& a, const auto& b) { return a.name < b.name; });

    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (components_[i].id.empty()) throw ModelError(K::kInvalid, "empty component id");
      if (i > 0 && components_[i].id == components_[i - 1].id)
        throw ModelError(K::kDuplicateId, "duplicate component id \"" + components_[i].id.str() + "\"");
    }
    for (std::size_t i = 0; i < probes_.size(); ++i) {
      if (probes_[i].id.empty()) throw ModelError(K::kInvalid, "empty probe id");
      if (probes_[i].kind.empty())
        throw ModelError(K::kInvalid, "probe \"" + probes_[i].id.str() + "\" has an empty kind");
      if (i > 0 && probes_[i].id == probes_[i - 1].id)
        throw ModelError(K::kDuplicateId, "duplicate probe id \"" + probes_[i].id.str() + "\"");
    }
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      auto& cls = classes_[i];
      if (cls.name.empty()) throw ModelError(K::kInvalid, "empty class name");
      if (i > 0 && cls.name == classes_[i - 1].name)
        throw ModelError(K::kDuplicateId, "duplicate class \"" + cls.name + "\"");
      if (cls.failure_types.empty())
        throw ModelError(K::kInvalid, "class \"" + cls.name + "\" has no failure types");
      std::sort(cls.failure_types.begin(), cls.failure_types.end());
      if (std::adjacent_find(cls.failure_types.begin(), cls.failure_types.end()) !=
          cls.failure_types.end())
        throw ModelError(K::kDuplicateId, "class \"" + cls.name + "\" repeats a failure type");
    }

    component_class_.resize(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i) {
      auto idx = find_class_index(components_[i].component_class);
      if (!idx)
        throw ModelError(K::kDanglingReference, "component \"" + components_[i].id.str() +
                                                    "\" references undeclared class \"" +
                                                    components_[i].component_class + "\"");
      component_class_[i] = static_cast<std::uint32_t>(*idx);
    }

    depends_.assign(components_.size(), {});
    upstream_.assign(probes_.size(), {});
    for (const auto& [cid, pids] : depends) {
      auto ci = find_component(cid);
      if (!ci)
        throw ModelError(K::kDanglingReference,
                         "dependency map references undeclared component \"" + cid.str() + "\"");
      auto& row = depends_[*ci];
      for (const auto& pid : pids) {
        auto pi = find_probe(pid);
        if (!pi)
          throw ModelError(K::kDanglingReference,
                           "component \"" + cid.str() + "\" references undeclared probe \"" +
                               pid.str() + "\"");
        row.push_back(static_cast<std::uint32_t>(*pi));
      }
      std::sort(row.begin(), row.end());
      if (std::adjacent_find(row.begin(), row.end()) != row.end())
        throw ModelError(K::kDuplicateId,
                         "component \"" + cid.str() + "\" lists a dependent probe twice");
    }
    for (std::size_t c = 0; c < depends_.size(); ++c)
      for (auto p : depends_[c]) upstream_[p].push_back(static_cast<std::uint32_t>(c));
  }

  std::size_t component_count() const noexcept { return components_.size(); }
  std::size_t probe_count() const noexcept { return probes_.size(); }

  std::span<const ComponentSpec> components() const noexcept { return components_; }
  std::span<const ProbeSpec> probes() const noexcept { return probes_; }
  const ComponentSpec& component(std::size_t i) const { return components_.at(i); }
  const ProbeSpec& probe(std::size_t i) const { return probes_.at(i); }

  std::optional<std::size_t> find_component(const ComponentId& id) const {
    auto it = std::lower_bound(components_.begin(), components_.end(), id,
                               [](const auto& c, const auto& v) { return c.id < v; });
    if (it == components_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - components_.begin());
  }

  std::optional<std::size_t> find_probe(const ProbeId& id) const {
    auto it = std::lower_bound(probes_.begin(), probes_.end(), id,
                               [](const auto& p, const auto& v) { return p.id < v; });
    if (it == probes_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - probes_.begin());
  }

  std::size_t component_index(const ComponentId& id) const {
    auto i = find_component(id);
    if (!i) throw ModelError(ModelError::Kind::kUnknownComponent, "unknown component \"" + id.str() + "\"");
    return *i;
  }

  std::size_t probe_index(const ProbeId& id) const {
    auto i = find_probe(id);
    if (!i) throw ModelError(ModelError::Kind::kUnknownProbe, "unknown probe \"" + id.str() + "\"");
    return *i;
  }

  // Sorted probe indices dependent on component `c`.
  std::span<const std::uint32_t> dependent_indices(std::size_t c) const { return depends_.at(c); }
  // Sorted component indices whose dependent set contains probe `p`.
  std::span<const std::uint32_t> upstream_indices(std::size_t p) const { return upstream_.at(p); }

  std::vector<ProbeId> dependent_probes(const ComponentId& c) const {
    std::vector<ProbeId> out;
    for (auto p : depends_[component_index(c)]) out.push_back(probes_[p].id);
    return out;
  }

  std::vector<ComponentId> upstream_components(const ProbeId& p) const {
    std::vector<ComponentId> out;
    for (auto c : upstream_[probe_index(p)]) out.push_back(components_[c].id);
    return out;
  }

  std::span<const ComponentClass> classes() const noexcept { return classes_; }
  const ComponentClass& class_of(std::size_t c) const { return classes_[component_class_.at(c)]; }

  const ComponentClass* find_class(std::string_view name) const {
    auto i = find_class_index(name);
    return i ? &classes_[*i] : nullptr;
  }

  const BehavioralModel& behavior() const noexcept { return behavior_; }

  DependencyMap dependency_map() const {
    DependencyMap out;
    for (std::size_t c = 0; c < components_.size(); ++c) {
      if (depends_[c].empty()) continue;
      auto& row = out[components_[c].id];
      for (auto p : depends_[c]) row.push_back(probes_[p].id);
    }
    return out;
  }

  friend bool operator==(const DetectorModel& a, const DetectorModel& b) {
    return a.components_ == b.components_ && a.probes_ == b.probes_ &&
           a.classes_ == b.classes_ && a.depends_ == b.depends_ && a.behavior_ == b.behavior_;
  }

 private:
  std::optional<std::size_t> find_class_index(std::string_view name) const {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), name,
                               [](const auto& c, std::string_view v) { return c.name < v; });
    if (it == classes_.end() || it->name != name) return std::nullopt;
    return static_cast<std::size_t>(it - classes_.begin());
  }

  std::vector<ComponentSpec> components_;
  std::vector<ProbeSpec> probes_;
  std::vector<ComponentClass> classes_;
  BehavioralModel behavior_;
  std::vector<std::uint32_t> component_class_;
  std::vector<std::vector<std::uint32_t>> depends_;
  std::vector<std::vector<std::uint32_t>> upstream_;
};

inline std::vector<ProbeId> dependent_probes(const DetectorModel& model, const ComponentId& c) {
  return model.dependent_probes(c);
}

inline std::vector<ComponentId> upstream_components(const DetectorModel& model, const ProbeId& p) {
  return model.upstream_components(p);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline std::vector<Diagnostic> validate_model(const DetectorModel& model) {
  using S = Diagnostic::Severity;
  std::vector<Diagnostic> out;

  for (std::size_t c = 0; c < model.component_count(); ++c) {
    if (model.dependent_indices(c).empty())
      out.push_back({S::kWarning, "component-without-probes",
                     "component \"" + model.component(c).id.str() +
                         "\" has no dependent probes and cannot be diagnosed"});
  }
  for (std::size_t p = 0; p < model.probe_count(); ++p) {
    if (model.upstream_indices(p).empty())
      out.push_back({S::kWarning, "probe-without-components",
                     "probe \"" + model.probe(p).id.str() + "\" has no upstream component"});
  }

  const auto& behavior = model.behavior();
  for (const auto& e : behavior.entries()) {
    const std::string key = "(" + e.component_class + ", " + e.failure_type + ")";
    const ComponentClass* cls = model.find_class(e.component_class);
    if (!cls) {
      out.push_back({S::kError, "behavior-unknown-class",
                     "behavior entry " + key + " references undeclared class"});
      continue;
    }
    if (!cls->has_failure_type(e.failure_type))
      out.push_back({S::kError, "behavior-unknown-failure-type",
                     "behavior entry " + key + " names a failure type the class lacks"});
    if (!e.trend.valid())
      out.push_back({S::kError, "behavior-invalid-trend",
                     "behavior entry " + key + " for feature " +
                         std::string(feature_name(e.feature)) +
                         " needs weight in (0,1], slope > 0 and a finite cutoff"});
    if (e.probe_role.empty())
      out.push_back({S::kError, "behavior-empty-role", "behavior entry " + key + " has an empty probe role"});
  }
  for (const auto& cls : model.classes()) {
    for (const auto& f : cls.failure_types) {
      if (behavior.entries_for(cls.name, f).empty())
        out.push_back({S::kWarning, "failure-type-without-behavior",
                       "class \"" + cls.name + "\" failure type \"" + f +
                           "\" has no behavioral entries: (" + cls.name + ", " + f + ")"});
    }
  }
  for (const auto& [key, p] : behavior.priors()) {
    const ComponentClass* cls = model.find_class(key.first);
    if (!cls || !cls->has_failure_type(key.second))
      out.push_back({S::kError, "prior-unknown-hypothesis",
                     "prior given for unknown (" + key.first + ", " + key.second + ")"});
    if (!(p > 0.0 && p < 1.0))
      out.push_back({S::kError, "prior-out-of-range",
                     "prior for (" + key.first + ", " + key.second + ") must lie in (0,1)"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model document (JSON)
// ---------------------------------------------------------------------------

namespace detail {

inline BehaviorEntry parse_behavior_entry(const json::Json& j, const std::string& locus) {
  json::reject_unknown_keys(j, {"class", "failure_type", "feature", "probe_role", "direction",
                                "weight", "slope", "cutoff"},
                            locus);
  BehaviorEntry e;
  e.component_class = json::get_string(json::require(j, "class", locus), json::child(locus, "class"));
  e.failure_type =
      json::get_string(json::require(j, "failure_type", locus), json::child(locus, "failure_type"));
  const auto feature_locus = json::child(locus, "feature");
  const auto feature = parse_feature(json::get_string(json::require(j, "feature", locus), feature_locus));
  if (!feature) throw ParseError("unknown feature name", feature_locus);
  e.feature = *feature;
  e.probe_role =
      json::get_string(json::require(j, "probe_role", locus), json::child(locus, "probe_role"));
  const auto dir_locus = json::child(locus, "direction");
  const auto dir = parse_direction(json::get_string(json::require(j, "direction", locus), dir_locus));
  if (!dir) throw ParseError("direction must be increasing, decreasing, either or no_change", dir_locus);
  e.trend.direction = *dir;
  e.trend.weight = json::get_number(json::require(j, "weight", locus), json::child(locus, "weight"));
  e.trend.slope = json::get_number(json::require(j, "slope", locus), json::child(locus, "slope"));
  e.trend.cutoff = json::get_number(json::require(j, "cutoff", locus), json::child(locus, "cutoff"));
  return e;
}

}  // namespace detail

inline DetectorModel model_from_json(const json::Json& doc) {
  json::reject_unknown_keys(doc, {"components", "probes", "depends", "classes", "behavior", "priors"}, "");

  std::vector<ComponentSpec> components;
  {
    const auto& arr = json::expect_array(json::require(doc, "components", ""), "components");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto loc = json::index("components", i);
      json::reject_unknown_keys(arr[i], {"id", "class"}, loc);
      components.push_back(
          {ComponentId(json::get_string(json::require(arr[i], "id", loc), json::child(loc, "id"))),
           json::get_string(json::require(arr[i], "class", loc), json::child(loc, "class"))});
    }
  }

  std::vector<ProbeSpec> probes;
  {
    const auto& arr = json::expect_array(json::require(doc, "probes", ""), "probes");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto loc = json::index("probes", i);
      json::reject_unknown_keys(arr[i], {"id", "kind"}, loc);
      probes.push_back(
          {ProbeId(json::get_string(json::require(arr[i], "id", loc), json::child(loc, "id"))),
           json::get_string(json::require(arr[i], "kind", loc), json::child(loc, "kind"))});
    }
  }

  DependencyMap depends;
  if (auto it = doc.find("depends"); it != doc.end()) {
    json::expect_object(*it, "depends");
    for (const auto& [cid, arr] : it->items()) {
      const auto loc = json::child("depends", cid);
      json::expect_array(arr, loc);
      auto& row = depends[ComponentId(cid)];
      for (std::size_t i = 0; i < arr.size(); ++i)
        row.emplace_back(json::get_string(arr[i], json::index(loc, i)));
    }
  }

  std::vector<ComponentClass> classes;
  {
    const auto& obj = json::expect_object(json::require(doc, "classes", ""), "classes");
    for (const auto& [name, body] : obj.items()) {
      const auto loc = json::child("classes", name);
      json::reject_unknown_keys(body, {"failure_types"}, loc);
      const auto ft_loc = json::child(loc, "failure_types");
      const auto& arr = json::expect_array(json::require(body, "failure_types", loc), ft_loc);
      ComponentClass cls{name, {}};
      for (std::size_t i = 0; i < arr.size(); ++i)
        cls.failure_types.push_back(json::get_string(arr[i], json::index(ft_loc, i)));
      classes.push_back(std::move(cls));
    }
  }

  std::vector<BehaviorEntry> entries;
  if (auto it = doc.find("behavior"); it != doc.end()) {
    json::expect_array(*it, "behavior");
    for (std::size_t i = 0; i < it->size(); ++i)
      entries.push_back(detail::parse_behavior_entry((*it)[i], json::index("behavior", i)));
  }

  std::map<BehavioralModel::Key, double> priors;
  if (auto it = doc.find("priors"); it != doc.end()) {
    json::expect_object(*it, "priors");
    for (const auto& [cls, table] : it->items()) {
      const auto loc = json::child("priors", cls);
      json::expect_object(table, loc);
      for (const auto& [failure, value] : table.items())
        priors[{cls, failure}] = json::get_number(value, json::child(loc, failure));
    }
  }

  DetectorModel model(std::move(components), std::move(probes), depends, std::move(classes),
                      BehavioralModel(std::move(entries), std::move(priors)));
  for (const auto& d : validate_model(model))
    if (d.is_error()) throw ModelError(ModelError::Kind::kInvalid, d.message);
  return model;
}

// Parses and validates a model document. Throws ParseError (with line or
// field locus) or ModelError.
inline DetectorModel load_model(std::string_view text) {
  return model_from_json(json::parse(text, "model"));
}

inline json::Json model_to_json(const DetectorModel& model) {
  json::Json doc = json::Json::object();
  auto& comps = doc["components"] = json::Json::array();
  for (const auto& c : model.components())
    comps.push_back({{"id", c.id.str()}, {"class", c.component_class}});
  auto& probes = doc["probes"] = json::Json::array();
  for (const auto& p : model.probes()) probes.push_back({{"id", p.id.str()}, {"kind", p.kind}});
  auto& depends = doc["depends"] = json::Json::object();
  for (const auto& [cid, pids] : model.dependency_map()) {
    auto& row = depends[cid.str()] = json::Json::array();
    for (const auto& p : pids) row.push_back(p.str());
  }
  auto& classes = doc["classes"] = json::Json::object();
  for (const auto& cls : model.classes()) classes[cls.name] = {{"failure_types", cls.failure_types}};
  auto& behavior = doc["behavior"] = json::Json::array();
  for (const auto& e : model.behavior().entries()) {
    behavior.push_back({{"class", e.component_class},
                        {"failure_type", e.failure_type},
                        {"feature", std::string(feature_name(e.feature))},
                        {"probe_role", e.probe_role},
                        {"direction", std::string(direction_name(e.trend.direction))},
                        {"weight", e.trend.weight},
                        {"slope", e.trend.slope},
                        {"cutoff", e.trend.cutoff}});
  }
  if (!model.behavior().priors().empty()) {
    auto& priors = doc["priors"] = json::Json::object();
    for (const auto& [key, p] : model.behavior().priors()) priors[key.first][key.second] = p;
  }
  return doc;
}

inline std::string serialize_model(const DetectorModel& model) {
  return json::dump(model_to_json(model));
}

}  // namespace mldiag
