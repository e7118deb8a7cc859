#pragma once

// Synthetic TOF-style detector: topology generator, Gaussian event
// surrogate with fault injection, and the end-to-end trial harness.
//
// Topology, per channel i (two channels per slat, one per PMT):
//
//   slat --> pmt.i --> cable.i --> splitter.i --+--> adc.i  (amplitude probe)
//                                               +--> tdc.i  (timing probe)
//
// hv.g powers PMTs [g*hv_group, (g+1)*hv_group); adcboard.b / tdcboard.b
// read channels [b*board_group, ...); adccrate.k / tdccrate.k power boards
// [k*boards_per_crate, ...). A component's dependent probes are all probes
// reached through it. pmt.i, cable.i and splitter.i share the signature
// {adc.i, tdc.i}.
//
// Census (n = n_slats * pmts_per_slat channels):
//   components = n_slats + 3n + ceil(n/hv_group) + 2*ceil(n/board_group)
//                + 2*ceil(ceil(n/board_group)/boards_per_crate)
//   probes     = 2n
//
// Random numbers come from a counter-based SplitMix64 stream: the word for
// (batch seed s, channel c, event e, slot j) is
//   mix(mix(s ^ mix(c + 1)) + (8e + j) * 0x9E3779B97F4A7C15)
// so every (channel, event) draw is independent of evaluation order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "mldiag/behavioral.hpp"
#include "mldiag/error.hpp"
#include "mldiag/model.hpp"
#include "mldiag/monitor.hpp"
#include "mldiag/pipeline.hpp"
#include "mldiag/structural.hpp"

namespace mldiag::sim {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64(seed ^ splitmix64(tag + 1));
}

inline double to_unit_open_closed(std::uint64_t bits) noexcept {  // (0, 1]
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

inline double to_unit(std::uint64_t bits) noexcept {  // [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class ChannelStream {
 public:
  ChannelStream(std::uint64_t batch_seed, std::uint64_t channel) noexcept
      : key_(splitmix64(batch_seed ^ splitmix64(channel + 1))) {}

  std::uint64_t bits(std::uint64_t event, std::uint64_t slot) const noexcept {
    return splitmix64(key_ + (event * 8 + slot) * 0x9E3779B97F4A7C15ULL);
  }

 private:
  std::uint64_t key_;
};

// Sequential draws for campaign-level choices.
class SeqRng {
 public:
  explicit SeqRng(std::uint64_t seed) noexcept : state_(seed) {}
  std::uint64_t next() noexcept { return splitmix64(state_++ * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL); }
  double uniform() noexcept { return to_unit(next()); }
  std::size_t index(std::size_t n) noexcept {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Spec and topology
// ---------------------------------------------------------------------------

struct ChannelNominal {
  double amplitude_mean = 200.0;
  double amplitude_sd = 20.0;
  double timing_mean = 100.0;
  double timing_sd = 2.0;
  double occupancy = 0.95;
  double pedestal_mean = 10.0;  // amplitude recorded with no signal
  double pedestal_sd = 1.0;

  friend bool operator==(const ChannelNominal&, const ChannelNominal&) = default;
};

// Parameters of the shipped behavioral model. Primary entries carry the
// failure's signature shift; secondary entries (mostly no_change) carry
// weaker corroboration. Primary weight must exceed twice the secondary
// log-odds for channel-level failure types to separate.
struct TrendShape {
  double primary_weight = 0.9;
  double secondary_weight = 0.3;
  double slope = 10.0;
  double cutoff = 4.0;

  friend bool operator==(const TrendShape&, const TrendShape&) = default;
};

struct SyntheticSpec {
  int n_slats = 136;
  int pmts_per_slat = 2;
  int hv_group = 16;
  int board_group = 16;
  int boards_per_crate = 8;
  ChannelNominal nominal;
  TrendShape trend;

  int channel_count() const noexcept { return n_slats * pmts_per_slat; }

  void validate() const {
    if (n_slats < 1 || pmts_per_slat < 1 || hv_group < 1 || board_group < 1 || boards_per_crate < 1)
      throw DataError("synthetic spec counts must all be >= 1");
    if (!(nominal.occupancy > 0.0 && nominal.occupancy <= 1.0))
      throw DataError("nominal occupancy must lie in (0, 1]");
    if (!(nominal.amplitude_sd > 0.0 && nominal.timing_sd > 0.0 && nominal.pedestal_sd > 0.0))
      throw DataError("nominal spreads must be positive");
    const TrendSpec probe{TrendDirection::kIncreasing, trend.primary_weight, trend.slope, trend.cutoff};
    const TrendSpec probe2{TrendDirection::kIncreasing, trend.secondary_weight, trend.slope, trend.cutoff};
    if (!probe.valid() || !probe2.valid()) throw DataError("invalid trend shape");
  }

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct Census {
  int slats = 0, pmts = 0, cables = 0, splitters = 0;
  int hv_supplies = 0, adc_boards = 0, tdc_boards = 0, adc_crates = 0, tdc_crates = 0;
  int probes = 0;

  int components() const noexcept {
    return slats + pmts + cables + splitters + hv_supplies + adc_boards + tdc_boards + adc_crates + tdc_crates;
  }
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

inline Census census(const SyntheticSpec& spec) {
  const int n = spec.channel_count();
  Census c;
  c.slats = spec.n_slats;
  c.pmts = c.cables = c.splitters = n;
  c.hv_supplies = ceil_div(n, spec.hv_group);
  c.adc_boards = c.tdc_boards = ceil_div(n, spec.board_group);
  c.adc_crates = c.tdc_crates = ceil_div(c.adc_boards, spec.boards_per_crate);
  c.probes = 2 * n;
  return c;
}

struct Channel {
  std::uint32_t amplitude_probe = 0;  // model probe index
  std::uint32_t timing_probe = 0;
};

struct SyntheticDetector {
  SyntheticSpec spec;
  DetectorModel model;
  std::vector<Channel> channels;
  // model probe index -> (channel, is_amplitude)
  std::vector<std::pair<std::uint32_t, bool>> probe_channel;
};

inline constexpr std::string_view kAmplitudeKind = "amplitude";
inline constexpr std::string_view kTimingKind = "timing";

namespace detail {

inline std::string padded(std::string_view prefix, int i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return std::string(prefix) + "." + digits;
}

inline std::vector<BehaviorEntry> synthetic_behavior(const TrendShape& t) {
  using D = TrendDirection;
  const std::string amp(kAmplitudeKind), tim(kTimingKind), any(kAnyProbeRole);
  std::vector<BehaviorEntry> out;
  auto add = [&](std::string cls, std::string failure, Feature f, const std::string& role, D dir, bool primary) {
    out.push_back({std::move(cls), std::move(failure), f, role,
                   TrendSpec{dir, primary ? t.primary_weight : t.secondary_weight, t.slope, t.cutoff}});
  };
  add("pmt", "gain_drop", Feature::kMean, amp, D::kDecreasing, true);
  add("pmt", "gain_drop", Feature::kStd, amp, D::kNoChange, false);
  add("pmt", "gain_drop", Feature::kMean, tim, D::kNoChange, false);
  add("pmt", "gain_rise", Feature::kMean, amp, D::kIncreasing, true);
  add("pmt", "gain_rise", Feature::kStd, amp, D::kNoChange, false);
  add("pmt", "gain_rise", Feature::kMean, tim, D::kNoChange, false);
  add("pmt", "dead", Feature::kOccupancy, amp, D::kDecreasing, true);
  add("pmt", "dead", Feature::kOccupancy, tim, D::kDecreasing, true);
  add("pmt", "noisy", Feature::kStd, amp, D::kIncreasing, true);
  add("pmt", "noisy", Feature::kMean, tim, D::kNoChange, false);
  for (const char* cls : {"cable", "splitter"}) {
    add(cls, "attenuation", Feature::kMean, amp, D::kDecreasing, true);
    add(cls, "attenuation", Feature::kStd, amp, D::kNoChange, false);
    add(cls, "attenuation", Feature::kMean, tim, D::kIncreasing, true);
    add(cls, "open", Feature::kMean, amp, D::kDecreasing, true);
    add(cls, "open", Feature::kOccupancy, amp, D::kNoChange, false);
    add(cls, "open", Feature::kOccupancy, tim, D::kDecreasing, true);
  }
  add("slat", "degraded", Feature::kMean, amp, D::kDecreasing, true);
  add("slat", "degraded", Feature::kStd, amp, D::kNoChange, false);
  add("slat", "degraded", Feature::kMean, tim, D::kNoChange, false);
  add("hv_supply", "off", Feature::kOccupancy, any, D::kDecreasing, true);
  add("hv_supply", "sag", Feature::kMean, amp, D::kDecreasing, true);
  add("hv_supply", "sag", Feature::kMean, tim, D::kNoChange, false);
  add("adc_board", "pedestal_shift", Feature::kMean, amp, D::kIncreasing, true);
  add("adc_board", "pedestal_shift", Feature::kStd, amp, D::kNoChange, false);
  add("adc_board", "stuck", Feature::kStd, amp, D::kDecreasing, true);
  add("tdc_board", "drift", Feature::kMean, tim, D::kEither, true);
  add("tdc_board", "drift", Feature::kStd, tim, D::kNoChange, false);
  add("tdc_board", "stuck", Feature::kStd, tim, D::kDecreasing, true);
  add("crate", "power_loss", Feature::kOccupancy, any, D::kDecreasing, true);
  return out;
}

}  // namespace detail

inline std::vector<ComponentClass> synthetic_classes() {
  return {{"adc_board", {"pedestal_shift", "stuck"}},
          {"cable", {"attenuation", "open"}},
          {"crate", {"power_loss"}},
          {"hv_supply", {"off", "sag"}},
          {"pmt", {"dead", "gain_drop", "gain_rise", "noisy"}},
          {"slat", {"degraded"}},
          {"splitter", {"attenuation", "open"}},
          {"tdc_board", {"drift", "stuck"}}};
}

inline SyntheticDetector build_synthetic_model(const SyntheticSpec& spec) {
  spec.validate();
  const Census cs = census(spec);
  const int n = spec.channel_count();
  const int width = std::max(3, static_cast<int>(std::to_string(n - 1).size()));

  std::vector<ComponentSpec> components;
  std::vector<ProbeSpec> probes;
  DependencyMap depends;
  std::vector<std::string> adc(n), tdc(n);
  for (int i = 0; i < n; ++i) {
    adc[i] = detail::padded("adc", i, width);
    tdc[i] = detail::padded("tdc", i, width);
    probes.push_back({ProbeId(adc[i]), std::string(kAmplitudeKind)});
    probes.push_back({ProbeId(tdc[i]), std::string(kTimingKind)});
  }
  auto add = [&](std::string_view prefix, int idx, std::string cls, std::vector<std::string> deps) {
    ComponentId id(detail::padded(prefix, idx, width));
    components.push_back({id, std::move(cls)});
    auto& row = depends[id];
    for (auto& d : deps) row.emplace_back(std::move(d));
  };

  for (int i = 0; i < n; ++i) {
    add("pmt", i, "pmt", {adc[i], tdc[i]});
    add("cable", i, "cable", {adc[i], tdc[i]});
    add("splitter", i, "splitter", {adc[i], tdc[i]});
  }
  for (int s = 0; s < spec.n_slats; ++s) {
    std::vector<std::string> deps;
    for (int e = 0; e < spec.pmts_per_slat; ++e) {
      const int i = s * spec.pmts_per_slat + e;
      deps.push_back(adc[i]);
      deps.push_back(tdc[i]);
    }
    add("slat", s, "slat", std::move(deps));
  }
  for (int g = 0; g < cs.hv_supplies; ++g) {
    std::vector<std::string> deps;
    for (int i = g * spec.hv_group; i < std::min(n, (g + 1) * spec.hv_group); ++i) {
      deps.push_back(adc[i]);
      deps.push_back(tdc[i]);
    }
    add("hv", g, "hv_supply", std::move(deps));
  }
  auto board_channels = [&](int b) {
    std::vector<int> out;
    for (int i = b * spec.board_group; i < std::min(n, (b + 1) * spec.board_group); ++i) out.push_back(i);
    return out;
  };
  for (int b = 0; b < cs.adc_boards; ++b) {
    std::vector<std::string> a, t;
    for (int i : board_channels(b)) {
      a.push_back(adc[i]);
      t.push_back(tdc[i]);
    }
    add("adcboard", b, "adc_board", std::move(a));
    add("tdcboard", b, "tdc_board", std::move(t));
  }
  for (int k = 0; k < cs.adc_crates; ++k) {
    std::vector<std::string> a, t;
    for (int b = k * spec.boards_per_crate; b < std::min(cs.adc_boards, (k + 1) * spec.boards_per_crate); ++b)
      for (int i : board_channels(b)) {
        a.push_back(adc[i]);
        t.push_back(tdc[i]);
      }
    add("adccrate", k, "crate", std::move(a));
    add("tdccrate", k, "crate", std::move(t));
  }

  SyntheticDetector det;
  det.spec = spec;
  det.model = DetectorModel(std::move(components), std::move(probes), depends, synthetic_classes(),
                            BehavioralModel(detail::synthetic_behavior(spec.trend)));
  det.channels.resize(static_cast<std::size_t>(n));
  det.probe_channel.resize(det.model.probe_count());
  for (int i = 0; i < n; ++i) {
    const auto a = static_cast<std::uint32_t>(det.model.probe_index(ProbeId(adc[i])));
    const auto t = static_cast<std::uint32_t>(det.model.probe_index(ProbeId(tdc[i])));
    det.channels[static_cast<std::size_t>(i)] = {a, t};
    det.probe_channel[a] = {static_cast<std::uint32_t>(i), true};
    det.probe_channel[t] = {static_cast<std::uint32_t>(i), false};
  }
  return det;
}

// ---------------------------------------------------------------------------
// Fault effects
// ---------------------------------------------------------------------------

// Parameter shift for one probe of an affected channel. Mean shifts are in
// units of the nominal sd.
struct ProbeEffect {
  double mean_shift_sd = 0.0;
  double sd_factor = 1.0;
  double occupancy_factor = 1.0;
  bool pedestal = false;  // reading collapses to the no-signal pedestal

  bool is_identity() const noexcept {
    return mean_shift_sd == 0.0 && sd_factor == 1.0 && occupancy_factor == 1.0 && !pedestal;
  }
  friend bool operator==(const ProbeEffect&, const ProbeEffect&) = default;
};

// Applied to the target's dependent probes, split by probe kind.
struct FaultEffect {
  ProbeEffect amplitude;
  ProbeEffect timing;
  friend bool operator==(const FaultEffect&, const FaultEffect&) = default;
};

using FailureKey = std::pair<std::string, std::string>;  // (class, failure type)

inline std::vector<FailureKey> effects_table() {
  std::vector<FailureKey> out;
  for (const auto& cls : synthetic_classes())
    for (const auto& f : cls.failure_types) out.emplace_back(cls.name, f);
  return out;
}

// Fault-effects table. `m` is the magnitude; `drift_sign` (+1/-1) sets the
// direction of tdc_board drift.
//
//   pmt        gain_drop  amplitude mean -m sd      gain_rise  amplitude mean +m sd
//              dead       no hits on either probe   noisy      amplitude sd x (1+m)
//   cable,     attenuation amplitude mean -m sd, timing mean +m sd
//   splitter   open        amplitude reads pedestal, timing loses hits
//   slat       degraded   amplitude mean -m sd on both channels
//   hv_supply  off        no hits on the group      sag        amplitude mean -m sd
//   adc_board  pedestal_shift amplitude mean +m sd  stuck      amplitude sd x 0.01
//   tdc_board  drift      timing mean +/-m sd       stuck      timing sd x 0.01
//   crate      power_loss no hits on the boards it powers
inline FaultEffect fault_effects(std::string_view cls, std::string_view failure, double m, int drift_sign = 1) {
  if (!(m > 0.0)) throw DataError("fault magnitude must be positive");
  FaultEffect fx;
  auto is = [&](std::string_view c, std::string_view f) { return cls == c && failure == f; };
  if (is("pmt", "gain_drop") || is("slat", "degraded") || is("hv_supply", "sag")) {
    fx.amplitude.mean_shift_sd = -m;
  } else if (is("pmt", "gain_rise") || is("adc_board", "pedestal_shift")) {
    fx.amplitude.mean_shift_sd = m;
  } else if (is("pmt", "dead") || is("hv_supply", "off") || is("crate", "power_loss")) {
    fx.amplitude.occupancy_factor = 0.0;
    fx.timing.occupancy_factor = 0.0;
  } else if (is("pmt", "noisy")) {
    fx.amplitude.sd_factor = 1.0 + m;
  } else if (is("cable", "attenuation") || is("splitter", "attenuation")) {
    fx.amplitude.mean_shift_sd = -m;
    fx.timing.mean_shift_sd = m;
  } else if (is("cable", "open") || is("splitter", "open")) {
    fx.amplitude.pedestal = true;
    fx.timing.occupancy_factor = 0.0;
  } else if (is("adc_board", "stuck")) {
    fx.amplitude.sd_factor = 0.01;
  } else if (is("tdc_board", "drift")) {
    fx.timing.mean_shift_sd = drift_sign >= 0 ? m : -m;
  } else if (is("tdc_board", "stuck")) {
    fx.timing.sd_factor = 0.01;
  } else {
    throw DataError("no fault effect for (" + std::string(cls) + ", " + std::string(failure) + ")");
  }
  return fx;
}

// Cross-check of the effects table against the shipped behavioral model:
// every shifted feature must have a behavior entry whose direction matches.
// Returns one message per mismatch.
inline std::vector<std::string> effects_behavior_mismatches(const DetectorModel& model) {
  using D = TrendDirection;
  std::vector<std::string> out;
  auto has = [&](const FailureKey& key, Feature f, std::string_view kind, std::initializer_list<D> dirs) {
    for (const auto& e : model.behavior().entries_for(key.first, key.second))
      if (e.feature == f && role_matches(e.probe_role, kind) &&
          std::find(dirs.begin(), dirs.end(), e.trend.direction) != dirs.end())
        return true;
    return false;
  };
  for (const auto& key : effects_table()) {
    for (int sign : {1, -1}) {
      const auto fx = fault_effects(key.first, key.second, 5.0, sign);
      for (auto [pe, kind] : {std::pair{fx.amplitude, kAmplitudeKind}, std::pair{fx.timing, kTimingKind}}) {
        auto need = [&](bool ok, std::string_view what) {
          if (!ok)
            out.push_back("(" + key.first + ", " + key.second + ") " + std::string(kind) + ": no entry for " +
                          std::string(what));
        };
        if (pe.mean_shift_sd > 0) need(has(key, Feature::kMean, kind, {D::kIncreasing, D::kEither}), "mean increase");
        if (pe.mean_shift_sd < 0) need(has(key, Feature::kMean, kind, {D::kDecreasing, D::kEither}), "mean decrease");
        if (pe.pedestal) need(has(key, Feature::kMean, kind, {D::kDecreasing}), "mean collapse to pedestal");
        if (pe.sd_factor > 1) need(has(key, Feature::kStd, kind, {D::kIncreasing}), "spread increase");
        if (pe.sd_factor < 1) need(has(key, Feature::kStd, kind, {D::kDecreasing}), "spread decrease");
        if (pe.occupancy_factor < 1) need(has(key, Feature::kOccupancy, kind, {D::kDecreasing}), "occupancy loss");
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Event generation
// ---------------------------------------------------------------------------

struct FaultScenario {
  ComponentId target;
  std::string failure_type;
  double magnitude = 5.0;
  std::uint64_t seed = 0;  // fault-internal randomness (drift direction)

  friend bool operator==(const FaultScenario&, const FaultScenario&) = default;
};

inline int drift_sign_for(const FaultScenario& s) { return (splitmix64(s.seed) & 1U) ? 1 : -1; }

// Per-probe effect (identity when unaffected), indexed by model probe.
inline std::vector<ProbeEffect> probe_effects(const SyntheticDetector& det, const FaultScenario& scenario) {
  const auto ci = det.model.component_index(scenario.target);
  const auto& cls = det.model.class_of(ci);
  if (!cls.has_failure_type(scenario.failure_type))
    throw DataError("failure type \"" + scenario.failure_type + "\" is not valid for class \"" + cls.name + "\"");
  const auto fx = fault_effects(cls.name, scenario.failure_type, scenario.magnitude, drift_sign_for(scenario));
  std::vector<ProbeEffect> out(det.model.probe_count());
  for (auto p : det.model.dependent_indices(ci))
    out[p] = det.probe_channel[p].second ? fx.amplitude : fx.timing;
  return out;
}

// One batch of `n_events` events over every model probe. Identical inputs
// give identical batches.
inline EventBatch generate_events(const SyntheticDetector& det, const std::optional<FaultScenario>& scenario,
                                  std::size_t n_events, std::uint64_t seed) {
  if (n_events == 0) throw DataError("n_events must be >= 1");
  const auto& nom = det.spec.nominal;
  std::vector<ProbeEffect> fx = scenario ? probe_effects(det, *scenario)
                                         : std::vector<ProbeEffect>(det.model.probe_count());
  std::vector<std::vector<double>> readings(det.model.probe_count(), std::vector<double>(n_events, kNoHit));

  for (std::size_t c = 0; c < det.channels.size(); ++c) {
    const Channel& ch = det.channels[c];
    const ProbeEffect& ea = fx[ch.amplitude_probe];
    const ProbeEffect& et = fx[ch.timing_probe];
    const double a_mu = ea.pedestal ? nom.pedestal_mean : nom.amplitude_mean + ea.mean_shift_sd * nom.amplitude_sd;
    const double a_sd = (ea.pedestal ? nom.pedestal_sd : nom.amplitude_sd) * ea.sd_factor;
    const double t_mu = nom.timing_mean + et.mean_shift_sd * nom.timing_sd;
    const double t_sd = nom.timing_sd * et.sd_factor;
    auto& out_a = readings[ch.amplitude_probe];
    auto& out_t = readings[ch.timing_probe];
    const ChannelStream stream(seed, c);
    for (std::size_t e = 0; e < n_events; ++e) {
      if (to_unit(stream.bits(e, 0)) >= nom.occupancy) continue;
      // Box-Muller pair: one normal for each probe of the channel.
      const double r = std::sqrt(-2.0 * std::log(to_unit_open_closed(stream.bits(e, 1))));
      const double theta = 2.0 * std::numbers::pi * to_unit(stream.bits(e, 2));
      const bool keep_a = ea.occupancy_factor >= 1.0 || to_unit(stream.bits(e, 3)) < ea.occupancy_factor;
      const bool keep_t = et.occupancy_factor >= 1.0 || to_unit(stream.bits(e, 4)) < et.occupancy_factor;
      if (keep_a) out_a[e] = a_mu + a_sd * r * std::cos(theta);
      if (keep_t) out_t[e] = t_mu + t_sd * r * std::sin(theta);
    }
  }
  std::vector<ProbeId> ids;
  ids.reserve(det.model.probe_count());
  for (const auto& p : det.model.probes()) ids.push_back(p.id);
  return EventBatch(n_events, std::move(ids), std::move(readings));
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

struct TrialMetrics {
  bool detected = false;   // some dependent probe of the target is BAD
  bool contained = false;  // target is in the suspect set
  int suspect_size = 0;
  std::optional<int> true_rank;  // 1-based; ambiguity-class aware

  friend bool operator==(const TrialMetrics&, const TrialMetrics&) = default;
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::optional<FaultScenario> truth;
  DiagnosisResult diagnosis;
  TrialMetrics metrics;
};

inline std::uint64_t baseline_batch_seed(std::uint64_t trial_seed, int b) {
  return derive_seed(trial_seed, 0x1000 + static_cast<std::uint64_t>(b));
}
inline std::uint64_t sweep_batch_seed(std::uint64_t trial_seed) { return derive_seed(trial_seed, 0x2000); }

inline BaselineArchive synthetic_baseline(const SyntheticDetector& det, const MonitorConfig& config,
                                          std::uint64_t seed) {
  config.validate();
  std::vector<EventBatch> batches;
  batches.reserve(static_cast<std::size_t>(config.baseline_samples));
  for (int b = 0; b < config.baseline_samples; ++b)
    batches.push_back(generate_events(det, std::nullopt, static_cast<std::size_t>(config.sample_size),
                                      baseline_batch_seed(seed, b)));
  return build_baseline(batches, config);
}

// The true hypothesis counts as found at the first rank whose failure type
// matches and whose component shares the target's signature.
inline TrialMetrics trial_metrics(const DetectorModel& model, const std::optional<FaultScenario>& truth,
                                  const DiagnosisResult& d) {
  TrialMetrics m;
  m.suspect_size = static_cast<int>(d.suspects.entries.size());
  if (!truth) return m;
  const auto ti = model.component_index(truth->target);
  const auto sig = model.dependent_indices(ti);
  for (const auto& v : d.verdicts)
    if (v.state == ProbeState::kBad) {
      const auto p = static_cast<std::uint32_t>(model.probe_index(v.probe));
      if (std::binary_search(sig.begin(), sig.end(), p)) m.detected = true;
    }
  for (const auto& e : d.suspects.entries)
    if (e.component == truth->target) m.contained = true;
  for (std::size_t r = 0; r < d.hypotheses.size(); ++r) {
    const auto& h = d.hypotheses[r].hypothesis;
    if (h.failure_type != truth->failure_type) continue;
    const auto hs = model.dependent_indices(model.component_index(h.component));
    if (std::equal(hs.begin(), hs.end(), sig.begin(), sig.end())) {
      m.true_rank = static_cast<int>(r) + 1;
      break;
    }
  }
  return m;
}

// Sweeps one (possibly faulty) batch against an existing archive.
inline TrialResult run_trial(const SyntheticDetector& det, const BaselineArchive& archive,
                             const std::optional<FaultScenario>& scenario, const MonitorConfig& config,
                             std::uint64_t seed) {
  TrialResult r;
  r.seed = seed;
  r.truth = scenario;
  const auto batch = generate_events(det, scenario, static_cast<std::size_t>(config.sample_size), sweep_batch_seed(seed));
  r.diagnosis = run_pipeline(det.model, archive, batch, config);
  r.metrics = trial_metrics(det.model, scenario, r.diagnosis);
  return r;
}

// Full trial: fresh baseline from `baseline_samples` fault-free batches,
// then one batch with the fault injected.
inline TrialResult run_trial(const SyntheticDetector& det, const std::optional<FaultScenario>& scenario,
                             const MonitorConfig& config, std::uint64_t seed) {
  return run_trial(det, synthetic_baseline(det, config, seed), scenario, config, seed);
}

inline TrialResult run_trial(const SyntheticSpec& spec, const std::optional<FaultScenario>& scenario,
                             const MonitorConfig& config, std::uint64_t seed) {
  return run_trial(build_synthetic_model(spec), scenario, config, seed);
}

// ---------------------------------------------------------------------------
// Campaigns
// ---------------------------------------------------------------------------

struct ScenarioDraw {
  std::size_t count = 0;
  double magnitude_min = 5.0;
  double magnitude_max = 5.0;
  std::vector<FailureKey> pairs;  // empty: the whole effects table
};

struct Campaign {
  SyntheticSpec spec;
  MonitorConfig config;
  std::uint64_t seed = 1;
  bool shared_baseline = false;  // one archive for every trial
  std::vector<std::optional<FaultScenario>> scenarios;  // nullopt: fault-free trial
  std::optional<ScenarioDraw> draw;
};

struct Aggregate {
  std::size_t trials = 0;
  std::size_t faulty_trials = 0;
  std::size_t detected_trials = 0;
  std::size_t contained_trials = 0;  // among detected
  std::size_t clean_trials_with_suspects = 0;
  double containment_rate = 0.0;     // contained / detected
  double mean_suspect_size = 0.0;    // over faulty trials
  double median_suspect_size = 0.0;
  double top1_rate = 0.0;            // true_rank == 1 over faulty trials
  std::map<int, std::size_t> true_rank_histogram;  // rank -> trials; 0 = absent

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct CampaignResult {
  std::vector<TrialResult> trials;
  Aggregate aggregate;
};

// Explicit scenarios first, then `draw.count` random ones: uniform over
// the (class, failure type) pairs, uniform target within the class,
// uniform magnitude.
inline std::vector<std::optional<FaultScenario>> expand_scenarios(const Campaign& c, const DetectorModel& model) {
  auto out = c.scenarios;
  if (!c.draw) return out;
  auto pairs = c.draw->pairs.empty() ? effects_table() : c.draw->pairs;
  std::map<std::string, std::vector<ComponentId>> by_class;
  for (std::size_t i = 0; i < model.component_count(); ++i)
    by_class[model.component(i).component_class].push_back(model.component(i).id);
  SeqRng rng(derive_seed(c.seed, 0x3000));
  for (std::size_t t = 0; t < c.draw->count; ++t) {
    const auto& key = pairs[rng.index(pairs.size())];
    const auto& members = by_class[key.first];
    if (members.empty()) throw DataError("no component of class \"" + key.first + "\" to inject into");
    FaultScenario s;
    s.target = members[rng.index(members.size())];
    s.failure_type = key.second;
    s.magnitude = c.draw->magnitude_min + (c.draw->magnitude_max - c.draw->magnitude_min) * rng.uniform();
    s.seed = rng.next();
    out.push_back(std::move(s));
  }
  return out;
}

inline Aggregate aggregate(std::span<const TrialResult> trials) {
  Aggregate a;
  a.trials = trials.size();
  std::vector<int> sizes;
  std::size_t top1 = 0;
  for (const auto& t : trials) {
    if (!t.truth) {
      if (t.metrics.suspect_size > 0) ++a.clean_trials_with_suspects;
      continue;
    }
    ++a.faulty_trials;
    sizes.push_back(t.metrics.suspect_size);
    if (t.metrics.detected) {
      ++a.detected_trials;
      if (t.metrics.contained) ++a.contained_trials;
    }
    ++a.true_rank_histogram[t.metrics.true_rank.value_or(0)];
    if (t.metrics.true_rank == 1) ++top1;
  }
  if (a.detected_trials > 0)
    a.containment_rate = static_cast<double>(a.contained_trials) / static_cast<double>(a.detected_trials);
  if (!sizes.empty()) {
    double sum = 0;
    for (int s : sizes) sum += s;
    a.mean_suspect_size = sum / static_cast<double>(sizes.size());
    std::sort(sizes.begin(), sizes.end());
    const std::size_t h = sizes.size() / 2;
    a.median_suspect_size = sizes.size() % 2 ? sizes[h] : 0.5 * (sizes[h - 1] + sizes[h]);
    a.top1_rate = static_cast<double>(top1) / static_cast<double>(sizes.size());
  }
  return a;
}

// Runs every trial; trials are independent and are spread over `threads`
// workers (0: hardware concurrency). Results are in scenario order.
inline CampaignResult run_campaign(const Campaign& campaign, unsigned threads = 0) {
  campaign.config.validate();
  const auto det = build_synthetic_model(campaign.spec);
  const auto scenarios = expand_scenarios(campaign, det.model);

  std::optional<BaselineArchive> shared;
  if (campaign.shared_baseline) shared = synthetic_baseline(det, campaign.config, derive_seed(campaign.seed, 0x4000));

  CampaignResult result;
  result.trials.resize(scenarios.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        const std::uint64_t seed = derive_seed(campaign.seed, i);
        result.trials[i] = shared ? run_trial(det, *shared, scenarios[i], campaign.config, seed)
                                  : run_trial(det, scenarios[i], campaign.config, seed);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, scenarios.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  result.aggregate = aggregate(result.trials);
  return result;
}

}  // namespace mldiag::sim
