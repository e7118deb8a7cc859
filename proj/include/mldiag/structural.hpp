#pragma once

// Level 2: Boolean suspect reduction over the dependency map.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mldiag/error.hpp"
#include "mldiag/model.hpp"
#include "mldiag/monitor.hpp"

namespace mldiag {

struct SuspectEntry {
  ComponentId component;
  int bad_probes = 0;
  int total_probes = 0;
  double ratio = 0.0;

  friend bool operator==(const SuspectEntry&, const SuspectEntry&) = default;
};

using AmbiguityPartition = std::vector<std::vector<ComponentId>>;

struct SuspectReport {
  std::vector<SuspectEntry> entries;  // ranked
  AmbiguityPartition ambiguity_classes;

  bool empty() const noexcept { return entries.empty(); }
  friend bool operator==(const SuspectReport&, const SuspectReport&) = default;
};

// BAD flag per model probe index. Verdicts must name every model probe
// exactly once.
inline std::vector<bool> bad_mask(const DetectorModel& model, std::span<const ProbeVerdict> verdicts) {
  std::vector<std::uint8_t> seen(model.probe_count(), 0);
  std::vector<bool> bad(model.probe_count(), false);
  for (const auto& v : verdicts) {
    const auto p = model.find_probe(v.probe);
    if (!p) throw DataError("verdict for unknown probe \"" + v.probe.str() + "\"");
    if (seen[*p]++) throw DataError("duplicate verdict for probe \"" + v.probe.str() + "\"");
    bad[*p] = v.state == ProbeState::kBad;
  }
  for (std::size_t p = 0; p < seen.size(); ++p)
    if (!seen[p]) throw DataError("missing verdict for probe \"" + model.probe(p).id.str() + "\"");
  return bad;
}

// Components with at least one BAD dependent probe, sorted by id. A
// component whose dependent probes are all OK is exonerated.
inline std::vector<ComponentId> reduce_suspects(const DetectorModel& model,
                                                std::span<const ProbeVerdict> verdicts) {
  const auto bad = bad_mask(model, verdicts);
  std::vector<bool> suspect(model.component_count(), false);
  for (std::size_t p = 0; p < bad.size(); ++p)
    if (bad[p])
      for (auto c : model.upstream_indices(p)) suspect[c] = true;
  std::vector<ComponentId> out;
  for (std::size_t c = 0; c < suspect.size(); ++c)
    if (suspect[c]) out.push_back(model.component(c).id);
  return out;
}

// Ranking rule: BAD/total ratio descending, then fewer dependent probes,
// then component id.
inline bool ranks_before(const SuspectEntry& a, const SuspectEntry& b) {
  const long long lhs = static_cast<long long>(a.bad_probes) * b.total_probes;
  const long long rhs = static_cast<long long>(b.bad_probes) * a.total_probes;
  if (lhs != rhs) return lhs > rhs;
  if (a.total_probes != b.total_probes) return a.total_probes < b.total_probes;
  return a.component < b.component;
}

inline std::vector<SuspectEntry> rank_suspects(const DetectorModel& model,
                                               std::span<const ProbeVerdict> verdicts,
                                               std::span<const ComponentId> suspects) {
  const auto bad = bad_mask(model, verdicts);
  std::vector<SuspectEntry> out;
  out.reserve(suspects.size());
  for (const auto& id : suspects) {
    const auto deps = model.dependent_indices(model.component_index(id));
    int n_bad = 0;
    for (auto p : deps) n_bad += bad[p] ? 1 : 0;
    if (n_bad == 0) throw DataError("component \"" + id.str() + "\" is not a suspect");
    const int total = static_cast<int>(deps.size());
    out.push_back({id, n_bad, total, static_cast<double>(n_bad) / total});
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

// Groups suspects whose dependent-probe signatures are identical. Members
// are sorted; classes are ordered by their smallest member.
inline AmbiguityPartition ambiguity_classes(const DetectorModel& model,
                                            std::span<const ComponentId> suspects) {
  std::map<std::vector<std::uint32_t>, std::vector<ComponentId>> by_signature;
  for (const auto& id : suspects) {
    const auto deps = model.dependent_indices(model.component_index(id));
    by_signature[std::vector<std::uint32_t>(deps.begin(), deps.end())].push_back(id);
  }
  AmbiguityPartition out;
  out.reserve(by_signature.size());
  for (auto& [_, members] : by_signature) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

inline SuspectReport structural_diagnosis(const DetectorModel& model,
                                          std::span<const ProbeVerdict> verdicts) {
  const auto suspects = reduce_suspects(model, verdicts);
  return {rank_suspects(model, verdicts, suspects), ambiguity_classes(model, suspects)};
}

}  // namespace mldiag
