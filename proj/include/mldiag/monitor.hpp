#pragma once

// Level 1: per-probe histograms and features, the fault-free baseline
// archive, and the chi-square OK/BAD classification.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mldiag/error.hpp"
#include "mldiag/features.hpp"
#include "mldiag/ids.hpp"
#include "mldiag/json_util.hpp"
#include "mldiag/numeric.hpp"

namespace mldiag {

// Missing reading (the probe recorded no hit in that event).
inline constexpr double kNoHit = std::numeric_limits<double>::quiet_NaN();
inline bool is_no_hit(double v) noexcept { return std::isnan(v); }

struct MonitorConfig {
  int sample_size = 1000;      // events per batch
  int baseline_samples = 10;   // fault-free batches in the archive
  int bins = 20;               // equal-width bins spanning mean +/- 4 sd
  double alpha = 0.01;         // per-probe significance
  double merge_floor = 5.0;    // minimum expected count per merged bin
  double spread_floor = 1e-9;  // s_x at or below this is degenerate
  double degenerate_z = 10.0;  // |z| substituted on degenerate spread
  // Divide the Pearson statistic by (1 + 1/baseline_samples): the expected
  // counts are themselves a mean of that many samples.
  bool baseline_variance_correction = true;

  void validate() const {
    if (sample_size < 30) throw DataError("sample_size must be >= 30");
    if (baseline_samples < 2) throw DataError("baseline_samples must be >= 2");
    if (bins < 2) throw DataError("bins must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must lie in (0,1)");
    if (!(merge_floor > 0.0)) throw DataError("merge_floor must be positive");
    if (!(spread_floor > 0.0)) throw DataError("spread_floor must be positive");
    if (!(degenerate_z > 0.0)) throw DataError("degenerate_z must be positive");
  }

  friend bool operator==(const MonitorConfig&, const MonitorConfig&) = default;
};

// ---------------------------------------------------------------------------
// Event batches
// ---------------------------------------------------------------------------

// One reading per event per probe; kNoHit marks a missing reading. Probes
// are kept sorted by id.
class EventBatch {
 public:
  EventBatch() = default;

  EventBatch(std::size_t event_count, std::vector<ProbeId> probes,
             std::vector<std::vector<double>> readings)
      : event_count_(event_count) {
    if (event_count == 0) throw DataError("event batch must hold at least one event");
    if (probes.size() != readings.size()) throw DataError("probe/reading count mismatch");
    std::vector<std::size_t> order(probes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return probes[a] < probes[b]; });
    for (auto i : order) {
      if (readings[i].size() != event_count)
        throw DataError("probe \"" + probes[i].str() + "\" has " + std::to_string(readings[i].size()) +
                        " readings, expected " + std::to_string(event_count));
      if (!probes_.empty() && probes_.back() == probes[i])
        throw DataError("probe \"" + probes[i].str() + "\" appears twice in batch");
      probes_.push_back(std::move(probes[i]));
      readings_.push_back(std::move(readings[i]));
    }
  }

  std::size_t event_count() const noexcept { return event_count_; }
  std::size_t probe_count() const noexcept { return probes_.size(); }
  std::span<const ProbeId> probes() const noexcept { return probes_; }
  const ProbeId& probe(std::size_t i) const { return probes_.at(i); }
  std::span<const double> readings(std::size_t i) const { return readings_.at(i); }

  std::optional<std::size_t> find(const ProbeId& id) const {
    auto it = std::lower_bound(probes_.begin(), probes_.end(), id);
    if (it == probes_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - probes_.begin());
  }

  friend bool operator==(const EventBatch& a, const EventBatch& b) {
    if (a.event_count_ != b.event_count_ || a.probes_ != b.probes_) return false;
    for (std::size_t i = 0; i < a.readings_.size(); ++i)
      for (std::size_t e = 0; e < a.event_count_; ++e) {
        const double x = a.readings_[i][e], y = b.readings_[i][e];
        if (is_no_hit(x) != is_no_hit(y) || (!is_no_hit(x) && x != y)) return false;
      }
    return true;
  }

 private:
  std::size_t event_count_ = 0;
  std::vector<ProbeId> probes_;
  std::vector<std::vector<double>> readings_;
};

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;          // B+1, strictly increasing
  std::vector<std::uint64_t> counts;  // B
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;

  std::uint64_t total() const {
    std::uint64_t t = underflow + overflow;
    for (auto c : counts) t += c;
    return t;
  }

  // [underflow, bin 0 .. bin B-1, overflow]
  std::vector<double> extended() const {
    std::vector<double> out;
    out.reserve(counts.size() + 2);
    out.push_back(static_cast<double>(underflow));
    for (auto c : counts) out.push_back(static_cast<double>(c));
    out.push_back(static_cast<double>(overflow));
    return out;
  }
};

inline void check_edges(std::span<const double> edges) {
  if (edges.size() < 3) throw DataError("histogram needs at least 3 edges (2 bins)");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw DataError("histogram edges must be strictly increasing");
}

// Half-open bins [e_i, e_{i+1}); readings below e_0 underflow, readings at
// or above e_B overflow, missing readings are skipped.
inline Histogram build_histogram(std::span<const double> readings, std::span<const double> edges) {
  check_edges(edges);
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  const std::size_t bins = h.counts.size();
  const double lo = edges.front(), hi = edges.back();
  const double scale = static_cast<double>(bins) / (hi - lo);
  for (double x : readings) {
    if (is_no_hit(x)) continue;
    if (x < lo) {
      ++h.underflow;
    } else if (x >= hi) {
      ++h.overflow;
    } else {
      // Start from the equal-width guess, then settle on the exact bin.
      auto i = std::min(bins - 1, static_cast<std::size_t>((x - lo) * scale));
      while (i > 0 && x < edges[i]) --i;
      while (i + 1 < bins && x >= edges[i + 1]) ++i;
      ++h.counts[i];
    }
  }
  return h;
}

inline std::vector<double> equal_width_edges(double lo, double hi, int bins) {
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / bins;
  edges.back() = hi;
  return edges;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

class FeatureVector {
 public:
  std::optional<double> get(Feature f) const { return values_[static_cast<std::size_t>(f)]; }
  void set(Feature f, std::optional<double> v) { values_[static_cast<std::size_t>(f)] = v; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::array<std::optional<double>, kAllFeatures.size()> values_{};
};

// mean and std (n-1) over non-missing readings, occupancy over all events,
// under/overflow fractions of non-missing readings outside [lo, hi).
// With no hits, mean and std are absent and the fractions are 0.
inline FeatureVector extract_features(std::span<const double> readings, double range_lo,
                                      double range_hi) {
  if (readings.empty()) throw DataError("extract_features needs at least one event");
  std::size_t hits = 0, under = 0, over = 0;
  double sum = 0.0;
  for (double x : readings) {
    if (is_no_hit(x)) continue;
    ++hits;
    sum += x;
    if (x < range_lo) ++under;
    else if (x >= range_hi) ++over;
  }
  FeatureVector fv;
  fv.set(Feature::kOccupancy, static_cast<double>(hits) / static_cast<double>(readings.size()));
  if (hits == 0) {
    fv.set(Feature::kUnderflowFrac, 0.0);
    fv.set(Feature::kOverflowFrac, 0.0);
    return fv;
  }
  const double n = static_cast<double>(hits);
  const double mu = sum / n;
  double ss = 0.0;
  for (double x : readings)
    if (!is_no_hit(x)) ss += (x - mu) * (x - mu);
  fv.set(Feature::kMean, mu);
  fv.set(Feature::kStd, hits < 2 ? 0.0 : std::sqrt(ss / (n - 1.0)));
  fv.set(Feature::kUnderflowFrac, static_cast<double>(under) / n);
  fv.set(Feature::kOverflowFrac, static_cast<double>(over) / n);
  return fv;
}

inline FeatureVector extract_features(std::span<const double> readings) {
  return extract_features(readings, -std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity());
}

inline double z_score(double x, double x_avg, double s_x, double spread_floor = 1e-9) {
  if (!(s_x > spread_floor))
    throw DegenerateSpreadError("feature spread " + json::format_double(s_x) +
                                " is at or below the floor");
  return (x - x_avg) / s_x;
}

// ---------------------------------------------------------------------------
// Baseline archive
// ---------------------------------------------------------------------------

struct FeatureNorm {
  double mean = 0.0;  // x_avg
  double sd = 0.0;    // s_x
  friend bool operator==(const FeatureNorm&, const FeatureNorm&) = default;
};

// Inclusive range over extended bins (0 = underflow, B+1 = overflow).
struct BinGroup {
  std::uint32_t first = 0;
  std::uint32_t last = 0;
  friend bool operator==(const BinGroup&, const BinGroup&) = default;
};

struct ProbeBaseline {
  std::vector<double> edges;        // frozen at build time
  std::vector<BinGroup> groups;     // merged bins
  std::vector<double> expected;     // E_i per group, per `event_count` events
  double event_count = 0.0;         // mean events per baseline batch
  std::map<Feature, FeatureNorm> feature_norms;

  double range_lo() const { return edges.front(); }
  double range_hi() const { return edges.back(); }

  std::optional<FeatureNorm> norm(Feature f) const {
    auto it = feature_norms.find(f);
    if (it == feature_norms.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const ProbeBaseline&, const ProbeBaseline&) = default;
};

struct BaselineArchive {
  int samples = 0;
  std::map<ProbeId, ProbeBaseline> probes;

  const ProbeBaseline& at(const ProbeId& id) const {
    auto it = probes.find(id);
    if (it == probes.end()) throw DataError("probe \"" + id.str() + "\" is missing from the baseline archive");
    return it->second;
  }

  friend bool operator==(const BaselineArchive&, const BaselineArchive&) = default;
};

// Greedy outside-in merge: accumulate from each end toward the largest bin,
// closing a group once it reaches `floor`; leftovers join the central group,
// and an under-filled central group absorbs its neighbours.
inline std::vector<BinGroup> merge_low_count_bins(std::span<const double> expected, double floor) {
  const std::size_t n = expected.size();
  if (n == 0) return {};
  const std::size_t center =
      static_cast<std::size_t>(std::max_element(expected.begin(), expected.end()) - expected.begin());

  std::vector<BinGroup> left, right;
  std::size_t start = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < center; ++i) {
    acc += expected[i];
    if (acc >= floor) {
      left.push_back({static_cast<std::uint32_t>(start), static_cast<std::uint32_t>(i)});
      start = i + 1;
      acc = 0.0;
    }
  }
  const std::size_t mid_first = start;
  std::size_t end = n - 1;
  acc = 0.0;
  for (std::size_t i = n - 1; i > center; --i) {
    acc += expected[i];
    if (acc >= floor) {
      right.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(end)});
      end = i - 1;
      acc = 0.0;
    }
  }
  const std::size_t mid_last = end;

  std::vector<BinGroup> groups(left.begin(), left.end());
  groups.push_back({static_cast<std::uint32_t>(mid_first), static_cast<std::uint32_t>(mid_last)});
  groups.insert(groups.end(), right.rbegin(), right.rend());

  auto sum = [&](const BinGroup& g) {
    double s = 0.0;
    for (auto i = g.first; i <= g.last; ++i) s += expected[i];
    return s;
  };
  std::size_t mid = left.size();
  while (groups.size() > 1 && sum(groups[mid]) < floor) {
    if (mid > 0) {
      groups[mid - 1].last = groups[mid].last;
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(mid));
      --mid;
    } else {
      groups[mid].last = groups[mid + 1].last;
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(mid + 1));
    }
  }
  return groups;
}

inline std::vector<double> fold_into_groups(std::span<const double> extended,
                                            std::span<const BinGroup> groups) {
  std::vector<double> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    double s = 0.0;
    for (auto i = g.first; i <= g.last; ++i) s += extended[i];
    out.push_back(s);
  }
  return out;
}

inline BaselineArchive build_baseline(std::span<const EventBatch> batches, const MonitorConfig& config) {
  config.validate();
  if (batches.size() < 2)
    throw DataError("baseline needs at least 2 batches (feature spread is undefined otherwise)");
  if (batches.size() != static_cast<std::size_t>(config.baseline_samples))
    throw DataError("baseline expects " + std::to_string(config.baseline_samples) + " batches, got " +
                    std::to_string(batches.size()));
  const auto ref_probes = batches.front().probes();
  for (const auto& b : batches) {
    if (!std::equal(ref_probes.begin(), ref_probes.end(), b.probes().begin(), b.probes().end()))
      throw DataError("baseline batches cover different probe sets");
  }

  double mean_events = 0.0;
  for (const auto& b : batches) mean_events += static_cast<double>(b.event_count());
  mean_events /= static_cast<double>(batches.size());
  const double m = static_cast<double>(batches.size());

  BaselineArchive archive;
  archive.samples = static_cast<int>(batches.size());
  for (std::size_t p = 0; p < ref_probes.size(); ++p) {
    const ProbeId& id = ref_probes[p];

    std::vector<double> pooled;
    pooled.reserve(batches.size() * batches.front().event_count());
    for (const auto& b : batches)
      for (double x : b.readings(p))
        if (!is_no_hit(x)) pooled.push_back(x);
    if (pooled.size() < 2) throw DataError("probe \"" + id.str() + "\" has too few baseline hits");
    const double mu = numeric::mean(pooled);
    const double half_width =
        4.0 * std::max(numeric::sample_sd(pooled), 1e-9 * std::max(1.0, std::abs(mu)));

    ProbeBaseline pb;
    pb.edges = equal_width_edges(mu - half_width, mu + half_width, config.bins);
    pb.event_count = mean_events;

    std::vector<double> mean_ext(static_cast<std::size_t>(config.bins) + 2, 0.0);
    std::map<Feature, std::vector<double>> per_batch;
    for (const auto& b : batches) {
      const auto ext = build_histogram(b.readings(p), pb.edges).extended();
      for (std::size_t i = 0; i < ext.size(); ++i) mean_ext[i] += ext[i] / m;
      const auto fv = extract_features(b.readings(p), pb.range_lo(), pb.range_hi());
      for (Feature f : kAllFeatures)
        if (auto v = fv.get(f)) per_batch[f].push_back(*v);
    }
    pb.groups = merge_low_count_bins(mean_ext, config.merge_floor);
    if (pb.groups.size() < 2)
      throw DataError("probe \"" + id.str() + "\" has too few baseline counts for a chi-square test");
    pb.expected = fold_into_groups(mean_ext, pb.groups);
    for (const auto& [f, values] : per_batch)
      if (values.size() >= 2) pb.feature_norms[f] = {numeric::mean(values), numeric::sample_sd(values)};
    archive.probes.emplace(id, std::move(pb));
  }
  return archive;
}

// ---------------------------------------------------------------------------
// Chi-square test
// ---------------------------------------------------------------------------

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
};

// Pearson sum of (O_i - E_i)^2 / E_i.
inline double pearson_statistic(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size()) throw DataError("observed/expected bin count mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (!(expected[i] > 0.0)) throw DataError("expected count must be positive in every bin");
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return stat;
}

inline ChiSquare chi_square_stat(const Histogram& observed, const ProbeBaseline& expected) {
  if (observed.edges != expected.edges) throw DataError("observed histogram bins do not align with the baseline");
  const auto o = fold_into_groups(observed.extended(), expected.groups);
  return {pearson_statistic(o, expected.expected), static_cast<int>(expected.groups.size()) - 1};
}

enum class ProbeState { kOk, kBad };

inline constexpr std::string_view state_name(ProbeState s) { return s == ProbeState::kOk ? "OK" : "BAD"; }

inline ProbeState classify_probe(double statistic, int dof, double alpha) {
  return statistic > numeric::chi_square_critical(dof, alpha) ? ProbeState::kBad : ProbeState::kOk;
}

struct ProbeVerdict {
  ProbeId probe;
  ProbeState state = ProbeState::kOk;
  double statistic = 0.0;  // tested value (after baseline-variance correction)
  int dof = 0;
  double critical = 0.0;

  friend bool operator==(const ProbeVerdict&, const ProbeVerdict&) = default;
};

inline ProbeVerdict test_probe(const ProbeId& id, std::span<const double> readings,
                               std::size_t event_count, const ProbeBaseline& baseline,
                               int baseline_samples, const MonitorConfig& config) {
  ProbeBaseline scaled = baseline;
  const double factor = static_cast<double>(event_count) / baseline.event_count;
  for (auto& e : scaled.expected) e *= factor;
  const auto chi = chi_square_stat(build_histogram(readings, baseline.edges), scaled);
  double stat = chi.statistic;
  if (config.baseline_variance_correction && baseline_samples > 0)
    stat /= 1.0 + 1.0 / static_cast<double>(baseline_samples);
  ProbeVerdict v{id, classify_probe(stat, chi.dof, config.alpha), stat, chi.dof,
                 numeric::chi_square_critical(chi.dof, config.alpha)};
  return v;
}

// One verdict per batch probe, sorted by probe id.
inline std::vector<ProbeVerdict> monitor_sweep(const EventBatch& batch, const BaselineArchive& archive,
                                               const MonitorConfig& config) {
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw DataError("alpha must lie in (0,1)");
  std::vector<ProbeVerdict> out;
  out.reserve(batch.probe_count());
  for (std::size_t p = 0; p < batch.probe_count(); ++p)
    out.push_back(test_probe(batch.probe(p), batch.readings(p), batch.event_count(),
                             archive.at(batch.probe(p)), archive.samples, config));
  return out;
}

// z for one feature against its archived norm. Absent when either the
// feature or its norm is absent; on degenerate spread, +/- degenerate_z
// with the sign of x - x_avg.
inline std::optional<double> feature_z(const FeatureVector& fv, Feature f, const ProbeBaseline& baseline,
                                       const MonitorConfig& config) {
  const auto x = fv.get(f);
  const auto norm = baseline.norm(f);
  if (!x || !norm) return std::nullopt;
  try {
    return z_score(*x, norm->mean, norm->sd, config.spread_floor);
  } catch (const DegenerateSpreadError&) {
    const double d = *x - norm->mean;
    return d > 0 ? config.degenerate_z : d < 0 ? -config.degenerate_z : 0.0;
  }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json::Json archive_to_json(const BaselineArchive& archive) {
  json::Json doc = {{"format", "mldiag.baseline/1"}, {"samples", archive.samples}};
  auto& probes = doc["probes"] = json::Json::object();
  for (const auto& [id, pb] : archive.probes) {
    json::Json groups = json::Json::array();
    for (const auto& g : pb.groups) groups.push_back({g.first, g.last});
    json::Json norms = json::Json::object();
    for (const auto& [f, n] : pb.feature_norms)
      norms[std::string(feature_name(f))] = {{"mean", n.mean}, {"sd", n.sd}};
    probes[id.str()] = {{"edges", pb.edges},
                        {"groups", groups},
                        {"expected", pb.expected},
                        {"event_count", pb.event_count},
                        {"features", norms}};
  }
  return doc;
}

inline std::string serialize_archive(const BaselineArchive& archive) {
  return json::dump(archive_to_json(archive));
}

inline BaselineArchive archive_from_json(const json::Json& doc) {
  json::reject_unknown_keys(doc, {"format", "samples", "probes"}, "");
  if (json::get_string(json::require(doc, "format", ""), "format") != "mldiag.baseline/1")
    throw ParseError("unsupported baseline format", "format");
  BaselineArchive archive;
  archive.samples = static_cast<int>(json::get_int(json::require(doc, "samples", ""), "samples"));
  const auto& probes = json::expect_object(json::require(doc, "probes", ""), "probes");
  for (const auto& [id, body] : probes.items()) {
    const auto loc = json::child("probes", id);
    json::reject_unknown_keys(body, {"edges", "groups", "expected", "event_count", "features"}, loc);
    ProbeBaseline pb;
    const auto& edges = json::expect_array(json::require(body, "edges", loc), json::child(loc, "edges"));
    for (std::size_t i = 0; i < edges.size(); ++i)
      pb.edges.push_back(json::get_number(edges[i], json::index(json::child(loc, "edges"), i)));
    try {
      check_edges(pb.edges);
    } catch (const DataError& e) {
      throw ParseError(e.what(), json::child(loc, "edges"));
    }
    const auto g_loc = json::child(loc, "groups");
    const auto& groups = json::expect_array(json::require(body, "groups", loc), g_loc);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const auto& g = json::expect_array(groups[i], json::index(g_loc, i));
      if (g.size() != 2) throw ParseError("group must be [first, last]", json::index(g_loc, i));
      BinGroup bg{static_cast<std::uint32_t>(json::get_uint(g[0], json::index(g_loc, i))),
                  static_cast<std::uint32_t>(json::get_uint(g[1], json::index(g_loc, i)))};
      const std::uint32_t expect_first = pb.groups.empty() ? 0 : pb.groups.back().last + 1;
      if (bg.first != expect_first || bg.last < bg.first)
        throw ParseError("groups must tile the extended bins in order", json::index(g_loc, i));
      pb.groups.push_back(bg);
    }
    if (pb.groups.empty() || pb.groups.back().last != pb.edges.size())
      throw ParseError("groups must cover every extended bin", g_loc);
    const auto e_loc = json::child(loc, "expected");
    const auto& expected = json::expect_array(json::require(body, "expected", loc), e_loc);
    for (std::size_t i = 0; i < expected.size(); ++i)
      pb.expected.push_back(json::get_number(expected[i], json::index(e_loc, i)));
    if (pb.expected.size() != pb.groups.size()) throw ParseError("one expected count per group", e_loc);
    pb.event_count = json::get_number(json::require(body, "event_count", loc), json::child(loc, "event_count"));
    const auto f_loc = json::child(loc, "features");
    for (const auto& [name, n] : json::expect_object(json::require(body, "features", loc), f_loc).items()) {
      const auto n_loc = json::child(f_loc, name);
      auto f = parse_feature(name);
      if (!f) throw ParseError("unknown feature", n_loc);
      json::reject_unknown_keys(n, {"mean", "sd"}, n_loc);
      pb.feature_norms[*f] = {json::get_number(json::require(n, "mean", n_loc), json::child(n_loc, "mean")),
                              json::get_number(json::require(n, "sd", n_loc), json::child(n_loc, "sd"))};
    }
    archive.probes.emplace(ProbeId(id), std::move(pb));
  }
  return archive;
}

inline BaselineArchive load_archive(std::string_view text) {
  return archive_from_json(json::parse(text, "baseline"));
}

// Delimited form: one line per event, one field per probe in `probe_order`,
// empty field for a missing reading. Lines starting with '#' are skipped.
inline EventBatch parse_batch_csv(std::string_view text, std::span<const ProbeId> probe_order) {
  std::vector<std::vector<double>> columns(probe_order.size());
  std::size_t events = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() == '#') continue;
    // A blank line is a record only for a single-probe model (one missing field).
    if (line.empty() && probe_order.size() != 1) continue;
    std::size_t field = 0, fpos = 0;
    while (true) {
      std::size_t comma = line.find(',', fpos);
      std::string_view cell = line.substr(fpos, comma == std::string_view::npos ? line.npos : comma - fpos);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      if (field >= probe_order.size())
        throw ParseError("too many fields (model has " + std::to_string(probe_order.size()) + " probes)",
                         "field " + std::to_string(field + 1), line_no);
      double v = kNoHit;
      if (!cell.empty()) {
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
          throw ParseError("not a number: \"" + std::string(cell) + "\"",
                           "field " + std::to_string(field + 1) + " (" + probe_order[field].str() + ")",
                           line_no);
      }
      columns[field].push_back(v);
      ++field;
      if (comma == std::string_view::npos) break;
      fpos = comma + 1;
    }
    if (field != probe_order.size())
      throw ParseError("expected " + std::to_string(probe_order.size()) + " fields, got " + std::to_string(field),
                       "record", line_no);
    ++events;
  }
  if (events == 0) throw ParseError("batch holds no events", "batch");
  return EventBatch(events, std::vector<ProbeId>(probe_order.begin(), probe_order.end()), std::move(columns));
}

// JSON-lines form: one object per event mapping probe id to a reading;
// absent or null entries are missing readings.
inline EventBatch parse_batch_jsonl(std::string_view text, std::span<const ProbeId> probe_order) {
  std::map<ProbeId, std::size_t> column_of;
  for (std::size_t i = 0; i < probe_order.size(); ++i) column_of[probe_order[i]] = i;
  std::vector<std::vector<double>> columns(probe_order.size());
  std::size_t events = 0, line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json::Json rec;
    try {
      rec = json::Json::parse(line.begin(), line.end());
    } catch (const json::Json::parse_error& e) {
      throw ParseError(std::string("malformed JSON record: ") + e.what(), "record", line_no);
    }
    if (!rec.is_object()) throw ParseError("record must be an object", "record", line_no);
    for (auto& col : columns) col.push_back(kNoHit);
    for (const auto& [key, value] : rec.items()) {
      auto it = column_of.find(ProbeId(key));
      if (it == column_of.end()) throw ParseError("unknown probe", key, line_no);
      if (value.is_null()) continue;
      if (!value.is_number()) throw ParseError("expected a number or null", key, line_no);
      columns[it->second].back() = value.get<double>();
    }
    ++events;
  }
  if (events == 0) throw ParseError("batch holds no events", "batch");
  return EventBatch(events, std::vector<ProbeId>(probe_order.begin(), probe_order.end()), std::move(columns));
}

// Dispatches on the first non-blank character: '{' selects JSON lines.
inline EventBatch parse_batch(std::string_view text, std::span<const ProbeId> probe_order) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '#') {
      i = text.find('\n', i);
      if (i == std::string_view::npos) break;
    } else if (text[i] == ' ' || text[i] == '\t' || text[i] == '\r' || text[i] == '\n') {
      ++i;
    } else {
      break;
    }
  }
  if (i < text.size() && text[i] == '{') return parse_batch_jsonl(text, probe_order);
  return parse_batch_csv(text, probe_order);
}

// Writes the delimited form with columns in the batch's (sorted) probe order.
inline std::string write_batch_csv(const EventBatch& batch) {
  std::string out;
  out.reserve(batch.event_count() * batch.probe_count() * 8);
  for (std::size_t e = 0; e < batch.event_count(); ++e) {
    for (std::size_t p = 0; p < batch.probe_count(); ++p) {
      if (p > 0) out += ',';
      const double v = batch.readings(p)[e];
      if (!is_no_hit(v)) out += json::format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace mldiag
