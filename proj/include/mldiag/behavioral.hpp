#pragma once

// Level 3: evidential scoring of (suspect, failure type) hypotheses.
//
// Each behavioral entry of a hypothesis selects some of the suspect's
// dependent probes by role. For every selected probe the feature's z-score
// against the baseline norm is mapped to a certainty factor by the trend's
// relational curve, and the factors are folded with the MYCIN combination
// rule in (probe id, feature name) order.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mldiag/error.hpp"
#include "mldiag/model.hpp"
#include "mldiag/monitor.hpp"
#include "mldiag/numeric.hpp"
#include "mldiag/structural.hpp"

namespace mldiag {

// Maps a z-score to a certainty factor in [-w, w]. With
// g(u) = 2*sigma(u) - 1:
//   increasing  w * g(k (z - c))
//   decreasing  w * g(k (-z - c))
//   either      w * g(k (|z| - c))
//   no_change  -w * g(k (|z| - c))
inline double relational_cf(double z, const TrendSpec& spec) {
  const double w = spec.weight, k = spec.slope, c = spec.cutoff;
  switch (spec.direction) {
    case TrendDirection::kIncreasing: return w * numeric::centered_logistic(k * (z - c));
    case TrendDirection::kDecreasing: return w * numeric::centered_logistic(k * (-z - c));
    case TrendDirection::kEither: return w * numeric::centered_logistic(k * (std::abs(z) - c));
    case TrendDirection::kNoChange: return -w * numeric::centered_logistic(k * (std::abs(z) - c));
  }
  return 0.0;
}

inline double combine_cf(double a, double b) {
  if (!(a >= -1.0 && a <= 1.0 && b >= -1.0 && b <= 1.0))
    throw std::domain_error("certainty factors must lie in [-1, 1]");
  if ((a == 1.0 && b == -1.0) || (a == -1.0 && b == 1.0))
    throw ContradictionError("cannot combine certainty factors +1 and -1");
  // Symmetric forms of a + b(1 - a) and a + b(1 + a): exact commutativity.
  if (a >= 0.0 && b >= 0.0) return (a + b) - a * b;
  if (a <= 0.0 && b <= 0.0) return (a + b) + a * b;
  return (a + b) / (1.0 - std::min(std::abs(a), std::abs(b)));
}

// Left fold from 0. A +1/-1 collision cancels to 0 and folding continues.
inline double fold_cf(std::span<const double> cfs) {
  double acc = 0.0;
  for (double cf : cfs) {
    try {
      acc = combine_cf(acc, cf);
    } catch (const ContradictionError&) {
      acc = 0.0;
    }
  }
  return acc;
}

// Posterior from a certainty factor and a prior, reading the CF as a
// likelihood ratio: lambda = 1/(1-cf) for cf >= 0, 1+cf otherwise.
inline double cf_to_probability(double cf, double prior) {
  if (!(cf > -1.0 && cf < 1.0)) throw std::domain_error("cf must lie strictly inside (-1, 1)");
  if (!(prior > 0.0 && prior < 1.0)) throw std::domain_error("prior must lie strictly inside (0, 1)");
  if (cf == 0.0) return prior;
  const double lambda = cf >= 0.0 ? 1.0 / (1.0 - cf) : 1.0 + cf;
  const double odds = lambda * prior / (1.0 - prior);
  return odds / (1.0 + odds);
}

struct Hypothesis {
  ComponentId component;
  std::string failure_type;

  std::string id() const { return component.str() + "/" + failure_type; }
  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

struct EvidenceItem {
  ProbeId probe;
  Feature feature = Feature::kMean;
  std::optional<double> z;  // absent when the feature or its norm is absent
  double cf = 0.0;
  TrendSpec trend;

  friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

struct HypothesisBelief {
  Hypothesis hypothesis;
  double combined_cf = 0.0;
  std::vector<EvidenceItem> evidence;
  std::optional<double> prior;
  std::optional<double> posterior;
  int structural_rank = 0;  // 1-based position of the component in the suspect ranking

  friend bool operator==(const HypothesisBelief&, const HypothesisBelief&) = default;
};

inline double refold(std::span<const EvidenceItem> evidence) {
  std::vector<double> cfs;
  cfs.reserve(evidence.size());
  for (const auto& e : evidence) cfs.push_back(e.cf);
  return fold_cf(cfs);
}

using FeatureTable = std::map<ProbeId, FeatureVector>;

inline HypothesisBelief score_hypothesis(const Hypothesis& h, const DetectorModel& model,
                                         const BehavioralModel& behavior, const FeatureTable& features,
                                         const BaselineArchive& archive, const MonitorConfig& config) {
  const auto ci = model.component_index(h.component);
  const ComponentClass& cls = model.class_of(ci);
  if (!cls.has_failure_type(h.failure_type))
    throw DataError("failure type \"" + h.failure_type + "\" does not belong to class \"" + cls.name + "\"");

  HypothesisBelief belief;
  belief.hypothesis = h;
  for (const auto& entry : behavior.entries_for(cls.name, h.failure_type)) {
    for (auto p : model.dependent_indices(ci)) {
      const ProbeSpec& probe = model.probe(p);
      if (!role_matches(entry.probe_role, probe.kind)) continue;
      auto fit = features.find(probe.id);
      if (fit == features.end()) throw DataError("missing features for probe \"" + probe.id.str() + "\"");
      EvidenceItem item{probe.id, entry.feature, feature_z(fit->second, entry.feature, archive.at(probe.id), config),
                        0.0, entry.trend};
      if (item.z) item.cf = relational_cf(*item.z, entry.trend);
      belief.evidence.push_back(std::move(item));
    }
  }
  std::sort(belief.evidence.begin(), belief.evidence.end(), [](const auto& a, const auto& b) {
    return std::tuple(a.probe, feature_name(a.feature)) < std::tuple(b.probe, feature_name(b.feature));
  });
  belief.combined_cf = refold(belief.evidence);
  return belief;
}

// Prior for a hypothesis: the model's table when present, otherwise uniform
// over the hypotheses of the component's ambiguity class plus the
// no-fault alternative.
inline double hypothesis_prior(const DetectorModel& model, const BehavioralModel& behavior,
                               const ComponentId& component, const std::string& failure_type,
                               std::span<const ComponentId> ambiguity_class) {
  const auto& cls = model.class_of(model.component_index(component));
  if (auto p = behavior.prior(cls.name, failure_type)) return *p;
  std::size_t n = 0;
  for (const auto& member : ambiguity_class)
    n += model.class_of(model.component_index(member)).failure_types.size();
  return 1.0 / static_cast<double>(std::max<std::size_t>(n, 1) + 1);
}

// Scores every failure type of every suspect. Sorted by combined CF
// descending, then structural rank, then hypothesis id.
inline std::vector<HypothesisBelief> diagnose(const SuspectReport& suspects, const DetectorModel& model,
                                              const BehavioralModel& behavior, const FeatureTable& features,
                                              const BaselineArchive& archive, const MonitorConfig& config) {
  std::map<ComponentId, const std::vector<ComponentId>*> class_of_suspect;
  for (const auto& cls : suspects.ambiguity_classes)
    for (const auto& id : cls) class_of_suspect[id] = &cls;

  std::vector<HypothesisBelief> out;
  for (std::size_t r = 0; r < suspects.entries.size(); ++r) {
    const auto& entry = suspects.entries[r];
    const auto& cls = model.class_of(model.component_index(entry.component));
    for (const auto& failure : cls.failure_types) {
      auto belief = score_hypothesis({entry.component, failure}, model, behavior, features, archive, config);
      belief.structural_rank = static_cast<int>(r) + 1;
      std::span<const ComponentId> members(&entry.component, 1);
      if (auto it = class_of_suspect.find(entry.component); it != class_of_suspect.end())
        members = *it->second;
      const double prior = hypothesis_prior(model, behavior, entry.component, failure, members);
      belief.prior = prior;
      if (belief.combined_cf >= 1.0) belief.posterior = 1.0;
      else if (belief.combined_cf <= -1.0) belief.posterior = 0.0;
      else belief.posterior = cf_to_probability(belief.combined_cf, prior);
      out.push_back(std::move(belief));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.combined_cf != b.combined_cf) return a.combined_cf > b.combined_cf;
    if (a.structural_rank != b.structural_rank) return a.structural_rank < b.structural_rank;
    return a.hypothesis.id() < b.hypothesis.id();
  });
  return out;
}

}  // namespace mldiag
