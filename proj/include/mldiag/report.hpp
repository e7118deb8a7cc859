#pragma once

// Machine report documents and the human table rendered from them.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>

#include "mldiag/behavioral.hpp"
#include "mldiag/json_util.hpp"
#include "mldiag/monitor.hpp"
#include "mldiag/pipeline.hpp"
#include "mldiag/simulator.hpp"
#include "mldiag/structural.hpp"

namespace mldiag::report {

using json::Json;

inline constexpr std::string_view kReportFormat = "mldiag.report/1";
inline constexpr std::string_view kAggregateFormat = "mldiag.aggregate/1";

// ISO-8601 UTC, second resolution.
inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json config_to_json(const MonitorConfig& c) {
  return {{"sample_size", c.sample_size},
          {"baseline_samples", c.baseline_samples},
          {"bins", c.bins},
          {"alpha", c.alpha},
          {"merge_floor", c.merge_floor},
          {"spread_floor", c.spread_floor},
          {"degenerate_z", c.degenerate_z},
          {"baseline_variance_correction", c.baseline_variance_correction}};
}

// Fields absent from `j` keep their value in `base`.
inline MonitorConfig config_from_json(const Json& j, MonitorConfig base, const std::string& locus) {
  json::reject_unknown_keys(j, {"sample_size", "baseline_samples", "bins", "alpha", "merge_floor",
                                "spread_floor", "degenerate_z", "baseline_variance_correction"},
                            locus);
  auto num = [&](std::string_view k, auto& field) {
    if (auto it = j.find(k); it != j.end()) {
      using T = std::remove_reference_t<decltype(field)>;
      if constexpr (std::is_same_v<T, int>)
        field = static_cast<int>(json::get_int(*it, json::child(locus, k)));
      else if constexpr (std::is_same_v<T, bool>)
        field = json::get_bool(*it, json::child(locus, k));
      else
        field = json::get_number(*it, json::child(locus, k));
    }
  };
  num("sample_size", base.sample_size);
  num("baseline_samples", base.baseline_samples);
  num("bins", base.bins);
  num("alpha", base.alpha);
  num("merge_floor", base.merge_floor);
  num("spread_floor", base.spread_floor);
  num("degenerate_z", base.degenerate_z);
  num("baseline_variance_correction", base.baseline_variance_correction);
  return base;
}

inline Json verdicts_to_json(std::span<const ProbeVerdict> verdicts) {
  Json out = Json::array();
  for (const auto& v : verdicts)
    out.push_back({{"probe", v.probe.str()},
                   {"state", std::string(state_name(v.state))},
                   {"statistic", v.statistic},
                   {"dof", v.dof},
                   {"critical", v.critical}});
  return out;
}

inline Json suspects_to_json(const SuspectReport& s) {
  Json entries = Json::array();
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    const auto& e = s.entries[i];
    entries.push_back({{"rank", i + 1},
                       {"component", e.component.str()},
                       {"bad_probes", e.bad_probes},
                       {"total_probes", e.total_probes},
                       {"ratio", e.ratio}});
  }
  Json classes = Json::array();
  for (const auto& cls : s.ambiguity_classes) {
    Json members = Json::array();
    for (const auto& id : cls) members.push_back(id.str());
    classes.push_back(std::move(members));
  }
  return {{"entries", std::move(entries)}, {"ambiguity_classes", std::move(classes)}};
}

inline Json trend_to_json(const TrendSpec& t) {
  return {{"direction", std::string(direction_name(t.direction))},
          {"weight", t.weight},
          {"slope", t.slope},
          {"cutoff", t.cutoff}};
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json hypotheses_to_json(std::span<const HypothesisBelief> hs) {
  Json out = Json::array();
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const auto& h = hs[i];
    Json evidence = Json::array();
    for (const auto& e : h.evidence)
      evidence.push_back({{"probe", e.probe.str()},
                          {"feature", std::string(feature_name(e.feature))},
                          {"z", optional_number(e.z)},
                          {"cf", e.cf},
                          {"trend", trend_to_json(e.trend)}});
    out.push_back({{"rank", i + 1},
                   {"hypothesis", h.hypothesis.id()},
                   {"component", h.hypothesis.component.str()},
                   {"failure_type", h.hypothesis.failure_type},
                   {"combined_cf", h.combined_cf},
                   {"prior", optional_number(h.prior)},
                   {"posterior", optional_number(h.posterior)},
                   {"structural_rank", h.structural_rank},
                   {"evidence", std::move(evidence)}});
  }
  return out;
}

inline Json features_to_json(const FeatureTable& features) {
  Json out = Json::object();
  for (const auto& [probe, fv] : features) {
    Json row = Json::object();
    for (Feature f : kAllFeatures) row[std::string(feature_name(f))] = optional_number(fv.get(f));
    out[probe.str()] = std::move(row);
  }
  return out;
}

inline Json scenario_to_json(const sim::FaultScenario& s) {
  return {{"target", s.target.str()}, {"failure_type", s.failure_type}, {"magnitude", s.magnitude}, {"seed", s.seed}};
}

inline Json metrics_to_json(const sim::TrialMetrics& m) {
  return {{"detected", m.detected},
          {"contained", m.contained},
          {"suspect_size", m.suspect_size},
          {"true_rank", m.true_rank ? Json(*m.true_rank) : Json(nullptr)}};
}

inline Json verdict_summary(std::span<const ProbeVerdict> verdicts) {
  std::size_t bad = 0;
  for (const auto& v : verdicts) bad += v.state == ProbeState::kBad ? 1 : 0;
  return {{"probes", verdicts.size()}, {"bad", bad}};
}

// Verdicts only (the `monitor` command).
inline Json monitor_report(std::span<const ProbeVerdict> verdicts, const MonitorConfig& config,
                           const std::string& timestamp) {
  return {{"format", std::string(kReportFormat)},
          {"kind", "monitor"},
          {"timestamp", timestamp},
          {"config", config_to_json(config)},
          {"summary", verdict_summary(verdicts)},
          {"verdicts", verdicts_to_json(verdicts)}};
}

inline Json diagnosis_report(const DiagnosisResult& d, const MonitorConfig& config, const std::string& timestamp) {
  return {{"format", std::string(kReportFormat)},
          {"kind", "diagnosis"},
          {"timestamp", timestamp},
          {"config", config_to_json(config)},
          {"summary", verdict_summary(d.verdicts)},
          {"verdicts", verdicts_to_json(d.verdicts)},
          {"suspects", suspects_to_json(d.suspects)},
          {"features", features_to_json(d.features)},
          {"hypotheses", hypotheses_to_json(d.hypotheses)}};
}

inline Json trial_report(const sim::TrialResult& t, const MonitorConfig& config, const std::string& timestamp) {
  Json doc = diagnosis_report(t.diagnosis, config, timestamp);
  doc["kind"] = "trial";
  doc["trial_seed"] = t.seed;
  doc["truth"] = t.truth ? scenario_to_json(*t.truth) : Json(nullptr);
  doc["metrics"] = metrics_to_json(t.metrics);
  return doc;
}

inline Json aggregate_to_json(const sim::Aggregate& a, const MonitorConfig& config, std::uint64_t seed,
                              const std::string& timestamp) {
  Json hist = Json::array();
  for (const auto& [rank, n] : a.true_rank_histogram)
    hist.push_back({{"rank", rank == 0 ? Json(nullptr) : Json(rank)}, {"trials", n}});
  return {{"format", std::string(kAggregateFormat)},
          {"timestamp", timestamp},
          {"config", config_to_json(config)},
          {"seed", seed},
          {"trials", a.trials},
          {"faulty_trials", a.faulty_trials},
          {"detected_trials", a.detected_trials},
          {"contained_trials", a.contained_trials},
          {"clean_trials_with_suspects", a.clean_trials_with_suspects},
          {"containment_rate", a.containment_rate},
          {"mean_suspect_size", a.mean_suspect_size},
          {"median_suspect_size", a.median_suspect_size},
          {"top1_rate", a.top1_rate},
          {"true_rank_histogram", std::move(hist)}};
}

// ---------------------------------------------------------------------------
// Human table
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fixed(const Json& v, int digits) {
  if (!v.is_number()) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace detail

// Renders a report or aggregate document. Reads only the document.
inline std::string render_table(const Json& doc, std::size_t max_rows = 20) {
  using detail::fixed;
  using detail::pad;
  std::ostringstream os;
  const std::string format = doc.value("format", "");
  if (format == kAggregateFormat) {
    os << "campaign seed " << doc["seed"].dump() << "  (" << doc["timestamp"].get<std::string>() << ")\n";
    os << "  trials               " << doc["trials"].dump() << "\n";
    os << "  faulty / detected    " << doc["faulty_trials"].dump() << " / " << doc["detected_trials"].dump() << "\n";
    os << "  containment rate     " << fixed(doc["containment_rate"], 4) << "\n";
    os << "  suspect size mean    " << fixed(doc["mean_suspect_size"], 2) << "\n";
    os << "  suspect size median  " << fixed(doc["median_suspect_size"], 1) << "\n";
    os << "  top-1 rate           " << fixed(doc["top1_rate"], 4) << "\n";
    os << "  true rank histogram\n";
    for (const auto& row : doc["true_rank_histogram"])
      os << "    " << pad(row["rank"].is_null() ? "absent" : row["rank"].dump(), 8) << row["trials"].dump() << "\n";
    return os.str();
  }

  os << doc.value("kind", "report") << " at " << doc.value("timestamp", "") << "  alpha "
     << doc["config"]["alpha"].dump() << "\n";
  os << "probes " << doc["summary"]["probes"].dump() << ", BAD " << doc["summary"]["bad"].dump() << "\n";
  std::size_t shown = 0;
  for (const auto& v : doc["verdicts"]) {
    if (v["state"] != "BAD") continue;
    if (shown++ == max_rows) {
      os << "  ...\n";
      break;
    }
    os << "  BAD " << pad(v["probe"].get<std::string>(), 16) << " chi2 " << pad(fixed(v["statistic"], 2), 12)
       << " crit " << fixed(v["critical"], 2) << " (dof " << v["dof"].dump() << ")\n";
  }
  if (doc.contains("truth") && !doc["truth"].is_null())
    os << "truth " << doc["truth"]["target"].get<std::string>() << "/" << doc["truth"]["failure_type"].get<std::string>()
       << "  contained " << doc["metrics"]["contained"].dump() << "  true rank " << doc["metrics"]["true_rank"].dump()
       << "\n";
  if (!doc.contains("suspects")) return os.str();

  const auto& entries = doc["suspects"]["entries"];
  os << "\nsuspects (" << entries.size() << ")\n";
  os << "  " << pad("rank", 6) << pad("component", 18) << pad("bad/total", 12) << "ratio\n";
  for (std::size_t i = 0; i < entries.size() && i < max_rows; ++i) {
    const auto& e = entries[i];
    os << "  " << pad(e["rank"].dump(), 6) << pad(e["component"].get<std::string>(), 18)
       << pad(e["bad_probes"].dump() + "/" + e["total_probes"].dump(), 12) << fixed(e["ratio"], 3) << "\n";
  }
  if (entries.size() > max_rows) os << "  ...\n";
  for (const auto& cls : doc["suspects"]["ambiguity_classes"]) {
    if (cls.size() < 2) continue;
    os << "  ambiguous:";
    for (const auto& m : cls) os << " " << m.get<std::string>();
    os << "\n";
  }

  const auto& hyps = doc["hypotheses"];
  os << "\nhypotheses (" << hyps.size() << ")\n";
  os << "  " << pad("rank", 6) << pad("hypothesis", 32) << pad("cf", 10) << pad("posterior", 11) << "struct\n";
  for (std::size_t i = 0; i < hyps.size() && i < max_rows; ++i) {
    const auto& h = hyps[i];
    os << "  " << pad(h["rank"].dump(), 6) << pad(h["hypothesis"].get<std::string>(), 32)
       << pad(fixed(h["combined_cf"], 4), 10) << pad(fixed(h["posterior"], 4), 11) << h["structural_rank"].dump()
       << "\n";
  }
  if (hyps.size() > max_rows) os << "  ...\n";
  return os.str();
}

}  // namespace mldiag::report
