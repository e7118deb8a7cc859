#pragma once

// JSON documents for synthetic specs and simulation campaigns.
//
// Campaign document:
//   {
//     "spec":   { "n_slats": 136, "hv_group": 16, ..., "nominal": {...}, "trend": {...} },
//     "config": { "alpha": 1e-4, ... },           // MonitorConfig overrides
//     "seed": 1,
//     "shared_baseline": false,
//     "scenarios": [ {"target": "pmt.005", "failure_type": "dead", "magnitude": 5, "seed": 0},
//                    {"target": null} ],           // null target: fault-free trial
//     "random": { "count": 200, "magnitude": [5, 8], "pairs": [["pmt", "dead"]] }
//   }
// Every key is optional; omitted values take the library defaults.

#include <string>
#include <string_view>

#include "mldiag/json_util.hpp"
#include "mldiag/report.hpp"
#include "mldiag/simulator.hpp"

namespace mldiag::sim {

namespace detail {

inline void read_number(const json::Json& j, std::string_view key, double& field, const std::string& locus) {
  if (auto it = j.find(key); it != j.end()) field = json::get_number(*it, json::child(locus, key));
}

inline void read_int(const json::Json& j, std::string_view key, int& field, const std::string& locus) {
  if (auto it = j.find(key); it != j.end()) field = static_cast<int>(json::get_int(*it, json::child(locus, key)));
}

}  // namespace detail

inline SyntheticSpec spec_from_json(const json::Json& j, const std::string& locus) {
  json::reject_unknown_keys(j, {"n_slats", "pmts_per_slat", "hv_group", "board_group", "boards_per_crate", "nominal",
                                "trend"},
                            locus);
  SyntheticSpec s;
  detail::read_int(j, "n_slats", s.n_slats, locus);
  detail::read_int(j, "pmts_per_slat", s.pmts_per_slat, locus);
  detail::read_int(j, "hv_group", s.hv_group, locus);
  detail::read_int(j, "board_group", s.board_group, locus);
  detail::read_int(j, "boards_per_crate", s.boards_per_crate, locus);
  if (auto it = j.find("nominal"); it != j.end()) {
    const auto loc = json::child(locus, "nominal");
    json::reject_unknown_keys(*it, {"amplitude_mean", "amplitude_sd", "timing_mean", "timing_sd", "occupancy",
                                    "pedestal_mean", "pedestal_sd"},
                              loc);
    auto& n = s.nominal;
    detail::read_number(*it, "amplitude_mean", n.amplitude_mean, loc);
    detail::read_number(*it, "amplitude_sd", n.amplitude_sd, loc);
    detail::read_number(*it, "timing_mean", n.timing_mean, loc);
    detail::read_number(*it, "timing_sd", n.timing_sd, loc);
    detail::read_number(*it, "occupancy", n.occupancy, loc);
    detail::read_number(*it, "pedestal_mean", n.pedestal_mean, loc);
    detail::read_number(*it, "pedestal_sd", n.pedestal_sd, loc);
  }
  if (auto it = j.find("trend"); it != j.end()) {
    const auto loc = json::child(locus, "trend");
    json::reject_unknown_keys(*it, {"primary_weight", "secondary_weight", "slope", "cutoff"}, loc);
    detail::read_number(*it, "primary_weight", s.trend.primary_weight, loc);
    detail::read_number(*it, "secondary_weight", s.trend.secondary_weight, loc);
    detail::read_number(*it, "slope", s.trend.slope, loc);
    detail::read_number(*it, "cutoff", s.trend.cutoff, loc);
  }
  s.validate();
  return s;
}

inline json::Json spec_to_json(const SyntheticSpec& s) {
  const auto& n = s.nominal;
  return {{"n_slats", s.n_slats},
          {"pmts_per_slat", s.pmts_per_slat},
          {"hv_group", s.hv_group},
          {"board_group", s.board_group},
          {"boards_per_crate", s.boards_per_crate},
          {"nominal",
           {{"amplitude_mean", n.amplitude_mean},
            {"amplitude_sd", n.amplitude_sd},
            {"timing_mean", n.timing_mean},
            {"timing_sd", n.timing_sd},
            {"occupancy", n.occupancy},
            {"pedestal_mean", n.pedestal_mean},
            {"pedestal_sd", n.pedestal_sd}}},
          {"trend",
           {{"primary_weight", s.trend.primary_weight},
            {"secondary_weight", s.trend.secondary_weight},
            {"slope", s.trend.slope},
            {"cutoff", s.trend.cutoff}}}};
}

inline std::optional<FaultScenario> scenario_from_json(const json::Json& j, const std::string& locus) {
  json::reject_unknown_keys(j, {"target", "failure_type", "magnitude", "seed"}, locus);
  const auto& target = json::require(j, "target", locus);
  if (target.is_null()) {
    if (j.size() != 1) throw ParseError("a fault-free trial takes no other keys", locus);
    return std::nullopt;
  }
  FaultScenario s;
  s.target = ComponentId(json::get_string(target, json::child(locus, "target")));
  s.failure_type = json::get_string(json::require(j, "failure_type", locus), json::child(locus, "failure_type"));
  detail::read_number(j, "magnitude", s.magnitude, locus);
  if (!(s.magnitude > 0.0)) throw ParseError("magnitude must be positive", json::child(locus, "magnitude"));
  if (auto it = j.find("seed"); it != j.end()) s.seed = json::get_uint(*it, json::child(locus, "seed"));
  return s;
}

inline Campaign campaign_from_json(const json::Json& doc) {
  json::reject_unknown_keys(doc, {"spec", "config", "seed", "shared_baseline", "scenarios", "random"}, "");
  Campaign c;
  if (auto it = doc.find("spec"); it != doc.end()) c.spec = spec_from_json(*it, "spec");
  if (auto it = doc.find("config"); it != doc.end()) c.config = report::config_from_json(*it, c.config, "config");
  if (auto it = doc.find("seed"); it != doc.end()) c.seed = json::get_uint(*it, "seed");
  if (auto it = doc.find("shared_baseline"); it != doc.end()) c.shared_baseline = json::get_bool(*it, "shared_baseline");
  if (auto it = doc.find("scenarios"); it != doc.end()) {
    json::expect_array(*it, "scenarios");
    for (std::size_t i = 0; i < it->size(); ++i) c.scenarios.push_back(scenario_from_json((*it)[i], json::index("scenarios", i)));
  }
  if (auto it = doc.find("random"); it != doc.end()) {
    const std::string loc = "random";
    json::reject_unknown_keys(*it, {"count", "magnitude", "pairs"}, loc);
    ScenarioDraw d;
    d.count = json::get_uint(json::require(*it, "count", loc), json::child(loc, "count"));
    if (auto m = it->find("magnitude"); m != it->end()) {
      const auto mloc = json::child(loc, "magnitude");
      if (m->is_number()) {
        d.magnitude_min = d.magnitude_max = json::get_number(*m, mloc);
      } else {
        json::expect_array(*m, mloc);
        if (m->size() != 2) throw ParseError("expected [min, max]", mloc);
        d.magnitude_min = json::get_number((*m)[0], json::index(mloc, 0));
        d.magnitude_max = json::get_number((*m)[1], json::index(mloc, 1));
      }
      if (!(d.magnitude_min > 0.0 && d.magnitude_max >= d.magnitude_min))
        throw ParseError("magnitude range must satisfy 0 < min <= max", mloc);
    }
    if (auto p = it->find("pairs"); p != it->end()) {
      const auto ploc = json::child(loc, "pairs");
      json::expect_array(*p, ploc);
      const auto table = effects_table();
      for (std::size_t i = 0; i < p->size(); ++i) {
        const auto eloc = json::index(ploc, i);
        const auto& e = json::expect_array((*p)[i], eloc);
        if (e.size() != 2) throw ParseError("expected [class, failure_type]", eloc);
        FailureKey key{json::get_string(e[0], eloc), json::get_string(e[1], eloc)};
        if (std::find(table.begin(), table.end(), key) == table.end())
          throw ParseError("(" + key.first + ", " + key.second + ") is not in the effects table", eloc);
        d.pairs.push_back(std::move(key));
      }
    }
    c.draw = std::move(d);
  }
  c.config.validate();
  return c;
}

inline Campaign load_campaign(std::string_view text) { return campaign_from_json(json::parse(text, "campaign")); }

inline json::Json campaign_to_json(const Campaign& c) {
  json::Json doc = {{"spec", spec_to_json(c.spec)},
                    {"config", report::config_to_json(c.config)},
                    {"seed", c.seed},
                    {"shared_baseline", c.shared_baseline}};
  auto& sc = doc["scenarios"] = json::Json::array();
  for (const auto& s : c.scenarios) sc.push_back(s ? report::scenario_to_json(*s) : json::Json{{"target", nullptr}});
  if (c.draw) {
    json::Json pairs = json::Json::array();
    for (const auto& [cls, f] : c.draw->pairs) pairs.push_back({cls, f});
    doc["random"] = {{"count", c.draw->count},
                     {"magnitude", {c.draw->magnitude_min, c.draw->magnitude_max}},
                     {"pairs", std::move(pairs)}};
  }
  return doc;
}

}  // namespace mldiag::sim
