#pragma once

#include <set>
#include <vector>

#include "mldiag/behavioral.hpp"
#include "mldiag/model.hpp"
#include "mldiag/monitor.hpp"
#include "mldiag/structural.hpp"

namespace mldiag {

struct DiagnosisResult {
  std::vector<ProbeVerdict> verdicts;
  SuspectReport suspects;
  std::vector<HypothesisBelief> hypotheses;
  FeatureTable features;  // only probes that depend on a suspect

  bool healthy() const noexcept { return suspects.empty(); }
};

// Features for every probe dependent on a suspect.
inline FeatureTable suspect_features(const DetectorModel& model, const SuspectReport& suspects,
                                     const EventBatch& batch, const BaselineArchive& archive) {
  std::set<std::uint32_t> wanted;
  for (const auto& e : suspects.entries)
    for (auto p : model.dependent_indices(model.component_index(e.component))) wanted.insert(p);
  FeatureTable out;
  for (auto p : wanted) {
    const ProbeId& id = model.probe(p).id;
    const auto b = batch.find(id);
    if (!b) throw DataError("batch lacks probe \"" + id.str() + "\"");
    const auto& pb = archive.at(id);
    out.emplace(id, extract_features(batch.readings(*b), pb.range_lo(), pb.range_hi()));
  }
  return out;
}

// Monitor sweep, then structural reduction, then behavioral scoring of the
// suspects. Levels 2 and 3 only run when some probe is BAD.
inline DiagnosisResult run_pipeline(const DetectorModel& model, const BaselineArchive& archive,
                                    const EventBatch& batch, const MonitorConfig& config) {
  DiagnosisResult r;
  r.verdicts = monitor_sweep(batch, archive, config);
  r.suspects = structural_diagnosis(model, r.verdicts);
  if (r.suspects.empty()) return r;
  r.features = suspect_features(model, r.suspects, batch, archive);
  r.hypotheses = diagnose(r.suspects, model, model.behavior(), r.features, archive, config);
  return r;
}

}  // namespace mldiag
