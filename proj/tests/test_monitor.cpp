#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"

namespace {

using namespace mldiag;

std::vector<double> normal_draws(std::uint64_t seed, std::size_t n, double mu, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(mu, sd);
  std::vector<double> out(n);
  for (auto& x : out) x = nd(rng);
  return out;
}

EventBatch single_probe_batch(std::vector<double> readings, const std::string& id = "p") {
  const auto n = readings.size();
  return EventBatch(n, {ProbeId(id)}, {std::move(readings)});
}

TEST(BuildHistogram, Examples) {
  const std::vector<double> edges{0, 2, 4};
  auto h = build_histogram(std::vector<double>{1, 1, 1}, edges);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{3, 0}));
  h = build_histogram(std::vector<double>{-1, 5}, edges);
  EXPECT_EQ(h.underflow, 1u);
  EXPECT_EQ(h.overflow, 1u);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{0, 0}));
}

TEST(BuildHistogram, HalfOpenBoundaries) {
  const std::vector<double> edges{0, 2, 4};
  const auto h = build_histogram(std::vector<double>{0, 2, 4, kNoHit}, edges);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{1, 1}));
  EXPECT_EQ(h.overflow, 1u);
  EXPECT_EQ(h.total(), 3u);
}

TEST(BuildHistogram, RejectsBadEdges) {
  EXPECT_THROW(build_histogram(std::vector<double>{1}, std::vector<double>{0, 1}), DataError);
  EXPECT_THROW(build_histogram(std::vector<double>{1}, std::vector<double>{0, 2, 2}), DataError);
  EXPECT_THROW(build_histogram(std::vector<double>{1}, std::vector<double>{0, 3, 2}), DataError);
}

TEST(BuildHistogram, ConservationOnNormalDraws) {
  const auto xs = normal_draws(1, 1000, 0, 1);
  const auto h = build_histogram(xs, equal_width_edges(-4, 4, 20));
  EXPECT_EQ(h.total(), 1000u);
}

TEST(BuildHistogramProperty, ConservationAndAgreementWithBinarySearch) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> nb(2, 40);
    std::vector<double> edges{std::uniform_real_distribution<double>(-10, 0)(rng)};
    const int bins = nb(rng);
    for (int i = 0; i < bins; ++i) edges.push_back(edges.back() + std::uniform_real_distribution<double>(1e-3, 2)(rng));
    auto xs = normal_draws(static_cast<std::uint64_t>(trial), 300, edges[edges.size() / 2], 5);
    for (int i = 0; i < 20; ++i) xs.push_back(edges[static_cast<std::size_t>(i) % edges.size()]);  // exact edges
    xs.push_back(kNoHit);
    const auto h = build_histogram(xs, edges);
    ASSERT_EQ(h.total(), xs.size() - 1);
    std::vector<std::uint64_t> brute(edges.size() - 1, 0);
    for (double x : xs) {
      if (is_no_hit(x) || x < edges.front() || x >= edges.back()) continue;
      ++brute[static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()) - 1];
    }
    ASSERT_EQ(h.counts, brute);
  }
}

TEST(ExtractFeatures, Examples) {
  auto fv = extract_features(std::vector<double>{5, 5, 5});
  EXPECT_EQ(fv.get(Feature::kMean), 5.0);
  EXPECT_EQ(fv.get(Feature::kStd), 0.0);
  EXPECT_EQ(fv.get(Feature::kOccupancy), 1.0);
  fv = extract_features(std::vector<double>{1, 2, 3});
  EXPECT_DOUBLE_EQ(*fv.get(Feature::kMean), 2.0);
  EXPECT_DOUBLE_EQ(*fv.get(Feature::kStd), 1.0);
  fv = extract_features(std::vector<double>{kNoHit, kNoHit});
  EXPECT_EQ(fv.get(Feature::kOccupancy), 0.0);
  EXPECT_FALSE(fv.get(Feature::kMean));
  EXPECT_FALSE(fv.get(Feature::kStd));
}

TEST(ExtractFeatures, SingleHitStdZeroAndRangeFractions) {
  auto fv = extract_features(std::vector<double>{kNoHit, 4.0});
  EXPECT_EQ(fv.get(Feature::kStd), 0.0);
  EXPECT_EQ(fv.get(Feature::kOccupancy), 0.5);
  fv = extract_features(std::vector<double>{-1, 0, 1, 2}, 0.0, 2.0);
  EXPECT_EQ(fv.get(Feature::kUnderflowFrac), 0.25);
  EXPECT_EQ(fv.get(Feature::kOverflowFrac), 0.25);
}

TEST(ZScore, Examples) {
  EXPECT_EQ(z_score(10, 10, 3), 0.0);
  EXPECT_EQ(z_score(12, 10, 1), 2.0);
  EXPECT_THROW(z_score(1, 0, 0), DegenerateSpreadError);
  EXPECT_THROW(z_score(1, 0, 1e-9), DegenerateSpreadError);
}

TEST(FeatureZ, DegenerateSpreadSubstitutesSignedValue) {
  ProbeBaseline pb;
  pb.feature_norms[Feature::kMean] = {10.0, 0.0};
  MonitorConfig cfg;
  FeatureVector fv;
  fv.set(Feature::kMean, 11.0);
  EXPECT_EQ(feature_z(fv, Feature::kMean, pb, cfg), 10.0);
  fv.set(Feature::kMean, 9.0);
  EXPECT_EQ(feature_z(fv, Feature::kMean, pb, cfg), -10.0);
  fv.set(Feature::kMean, 10.0);
  EXPECT_EQ(feature_z(fv, Feature::kMean, pb, cfg), 0.0);
  EXPECT_FALSE(feature_z(fv, Feature::kStd, pb, cfg));
}

TEST(MergeLowCountBins, OutsideInExample) {
  const std::vector<double> e{1, 1, 10, 10, 1, 1};
  const auto g = merge_low_count_bins(e, 5);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0], (BinGroup{0, 2}));
  EXPECT_EQ(g[1], (BinGroup{3, 5}));
}

TEST(MergeLowCountBinsProperty, GroupsTileAndMeetFloor) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
    std::vector<double> e(n);
    for (auto& x : e) x = std::uniform_real_distribution<double>(0, 12)(rng);
    const auto g = merge_low_count_bins(e, 5);
    ASSERT_FALSE(g.empty());
    ASSERT_EQ(g.front().first, 0u);
    ASSERT_EQ(g.back().last, n - 1);
    for (std::size_t i = 1; i < g.size(); ++i) ASSERT_EQ(g[i].first, g[i - 1].last + 1);
    const auto sums = fold_into_groups(e, g);
    if (g.size() > 1)
      for (double s : sums) ASSERT_GE(s, 5.0);
  }
}

TEST(BuildBaseline, IdenticalBatchesHaveDegenerateSpread) {
  const auto xs = normal_draws(2, 1000, 50, 5);
  std::vector<EventBatch> batches(10, single_probe_batch(xs));
  const auto a = build_baseline(batches, MonitorConfig{});
  const auto& pb = a.at(ProbeId("p"));
  // Rounding in the mean can leave a residue, but never above the floor.
  for (const auto& [f, norm] : pb.feature_norms) EXPECT_LE(norm.sd, MonitorConfig{}.spread_floor) << feature_name(f);
  const auto one = fold_into_groups(build_histogram(xs, pb.edges).extended(), pb.groups);
  ASSERT_EQ(one.size(), pb.expected.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_NEAR(pb.expected[i], one[i], 1e-9);
}

TEST(BuildBaseline, TwoBatchMeanNorm) {
  std::vector<double> a, b;
  for (int i = 0; i < 63; ++i) {
    a.push_back(10.0 + (i % 7 - 3) * 0.5);
    b.push_back(12.0 + (i % 7 - 3) * 0.5);
  }
  MonitorConfig cfg;
  cfg.baseline_samples = 2;
  const auto arch = build_baseline(std::vector<EventBatch>{single_probe_batch(a), single_probe_batch(b)}, cfg);
  const auto norm = *arch.at(ProbeId("p")).norm(Feature::kMean);
  EXPECT_DOUBLE_EQ(norm.mean, 11.0);
  EXPECT_DOUBLE_EQ(norm.sd, std::sqrt(2.0));
}

TEST(BuildBaseline, Errors) {
  MonitorConfig cfg;
  cfg.baseline_samples = 2;
  const auto b = single_probe_batch(normal_draws(1, 100, 0, 1));
  EXPECT_THROW(build_baseline(std::vector<EventBatch>{b}, cfg), DataError);
  const auto other = single_probe_batch(normal_draws(2, 100, 0, 1), "q");
  EXPECT_THROW(build_baseline(std::vector<EventBatch>{b, other}, cfg), DataError);
  cfg.baseline_samples = 3;
  EXPECT_THROW(build_baseline(std::vector<EventBatch>{b, b}, cfg), DataError);
}

TEST(BuildBaseline, EdgesSpanFourSdOfPooledReadings) {
  std::vector<EventBatch> bs;
  std::vector<double> pooled;
  for (int i = 0; i < 10; ++i) {
    auto xs = normal_draws(100 + i, 1000, 20, 3);
    pooled.insert(pooled.end(), xs.begin(), xs.end());
    bs.push_back(single_probe_batch(std::move(xs)));
  }
  const auto pb = build_baseline(bs, MonitorConfig{}).at(ProbeId("p"));
  const double mu = numeric::mean(pooled), sd = numeric::sample_sd(pooled);
  EXPECT_NEAR(pb.range_lo(), mu - 4 * sd, 1e-9);
  EXPECT_NEAR(pb.range_hi(), mu + 4 * sd, 1e-9);
  EXPECT_EQ(pb.edges.size(), 21u);
  for (double e : pb.expected) EXPECT_GE(e, 5.0);
}

TEST(PearsonStatistic, Examples) {
  EXPECT_EQ(pearson_statistic(std::vector<double>{10, 0}, std::vector<double>{5, 5}), 10.0);
  EXPECT_DOUBLE_EQ(pearson_statistic(std::vector<double>{6, 4}, std::vector<double>{5, 5}), 0.4);
  EXPECT_EQ(pearson_statistic(std::vector<double>{3, 7, 9}, std::vector<double>{3, 7, 9}), 0.0);
  EXPECT_THROW(pearson_statistic(std::vector<double>{1}, std::vector<double>{0}), DataError);
  EXPECT_THROW(pearson_statistic(std::vector<double>{1, 2}, std::vector<double>{1}), DataError);
}

TEST(ChiSquareStat, DofIsGroupsMinusOneAndEdgesMustAlign) {
  ProbeBaseline pb;
  pb.edges = {0, 2, 4};
  pb.groups = {{0, 1}, {2, 3}};  // [under, bin0] [bin1, over]
  pb.expected = {5, 5};
  Histogram h = build_histogram(std::vector<double>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, pb.edges);
  const auto c = chi_square_stat(h, pb);
  EXPECT_EQ(c.dof, 1);
  EXPECT_EQ(c.statistic, 10.0);
  h.edges = {0, 2, 5};
  EXPECT_THROW(chi_square_stat(h, pb), DataError);
}

TEST(PearsonProperty, PermutationSymmetryAndScaling) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 50);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t % 15);
    std::vector<double> o(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::floor(u(rng));
      e[i] = u(rng);
    }
    const double base = pearson_statistic(o, e);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> po(n), pe(n);
    for (std::size_t i = 0; i < n; ++i) {
      po[i] = o[perm[i]];
      pe[i] = e[perm[i]];
    }
    ASSERT_NEAR(pearson_statistic(po, pe), base, 1e-12 * std::max(1.0, base));
    const double k = u(rng) / 7;
    std::vector<double> ko(o), ke(e);
    for (auto& x : ko) x *= k;
    for (auto& x : ke) x *= k;
    ASSERT_NEAR(pearson_statistic(ko, ke), k * base, 1e-11 * std::max(1.0, k * base));
  }
}

TEST(ClassifyProbe, Examples) {
  EXPECT_EQ(classify_probe(0.0, 9, 0.01), ProbeState::kOk);
  EXPECT_EQ(classify_probe(30.0, 9, 0.01), ProbeState::kBad);
  EXPECT_EQ(classify_probe(15.0, 9, 0.01), ProbeState::kOk);
  for (int d = 1; d < 50; ++d)
    for (double a : {0.5, 0.01, 1e-6}) EXPECT_EQ(classify_probe(0.0, d, a), ProbeState::kOk);
}

TEST(ClassifyProbeProperty, MonotoneInStatistic) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> s(0, 80);
  for (int t = 0; t < 5000; ++t) {
    double a = s(rng), b = s(rng);
    if (a > b) std::swap(a, b);
    const int dof = 1 + t % 30;
    if (classify_probe(a, dof, 0.01) == ProbeState::kBad) ASSERT_EQ(classify_probe(b, dof, 0.01), ProbeState::kBad);
  }
}

// Small synthetic detector shared by the sweep tests.
struct SmallRig {
  sim::SyntheticDetector det = sim::build_synthetic_model({.n_slats = 8});
  MonitorConfig cfg;
  BaselineArchive archive = sim::synthetic_baseline(det, cfg, 21);
};

TEST(MonitorSweep, OneVerdictPerProbeSortedById) {
  SmallRig rig;
  const auto batch = sim::generate_events(rig.det, std::nullopt, 1000, 99);
  const auto v = monitor_sweep(batch, rig.archive, rig.cfg);
  ASSERT_EQ(v.size(), rig.det.model.probe_count());
  EXPECT_TRUE(std::is_sorted(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.probe < b.probe; }));
  for (const auto& x : v) EXPECT_GE(x.statistic, 0.0);
}

TEST(MonitorSweep, ReplayedBaselineBatchesRarelyFlag) {
  SmallRig rig;
  std::size_t bad = 0, n = 0;
  for (int b = 0; b < rig.cfg.baseline_samples; ++b) {
    const auto batch = sim::generate_events(rig.det, std::nullopt, 1000, sim::baseline_batch_seed(21, b));
    for (const auto& v : monitor_sweep(batch, rig.archive, rig.cfg)) {
      bad += v.state == ProbeState::kBad;
      ++n;
    }
  }
  // A replayed batch is part of the expected counts, so its rate sits at or
  // below alpha.
  const double rate = static_cast<double>(bad) / static_cast<double>(n);
  EXPECT_LE(rate, 0.01 + 3 * std::sqrt(0.01 * 0.99 / static_cast<double>(n)));
}

TEST(MonitorSweep, FiveSdShiftFlagsTheProbe) {
  SmallRig rig;
  auto batch = sim::generate_events(rig.det, std::nullopt, 1000, 5);
  const auto p = *batch.find(ProbeId("adc.003"));
  std::vector<std::vector<double>> readings;
  std::vector<ProbeId> ids;
  for (std::size_t i = 0; i < batch.probe_count(); ++i) {
    ids.push_back(batch.probe(i));
    auto r = std::vector<double>(batch.readings(i).begin(), batch.readings(i).end());
    if (i == p)
      for (auto& x : r)
        if (!is_no_hit(x)) x += 5 * rig.det.spec.nominal.amplitude_sd;
    readings.push_back(std::move(r));
  }
  const EventBatch shifted(batch.event_count(), ids, readings);
  for (const auto& v : monitor_sweep(shifted, rig.archive, rig.cfg))
    if (v.probe == ProbeId("adc.003")) EXPECT_EQ(v.state, ProbeState::kBad);
}

TEST(MonitorSweep, EmptyProbeSet) {
  const EventBatch empty(10, {}, {});
  EXPECT_TRUE(monitor_sweep(empty, BaselineArchive{}, MonitorConfig{}).empty());
}

TEST(MonitorSweep, MissingArchiveProbeIsAnError) {
  SmallRig rig;
  const EventBatch b(3, {ProbeId("nope")}, {{1, 2, 3}});
  EXPECT_THROW(monitor_sweep(b, rig.archive, rig.cfg), DataError);
}

TEST(MonitorSweep, DeterministicAndOrderInsensitive) {
  SmallRig rig;
  const auto batch = sim::generate_events(rig.det, std::nullopt, 1000, 8);
  std::vector<ProbeId> ids;
  std::vector<std::vector<double>> readings;
  for (std::size_t i = batch.probe_count(); i-- > 0;) {
    ids.push_back(batch.probe(i));
    readings.emplace_back(batch.readings(i).begin(), batch.readings(i).end());
  }
  const EventBatch reversed(batch.event_count(), ids, readings);
  EXPECT_EQ(monitor_sweep(batch, rig.archive, rig.cfg), monitor_sweep(reversed, rig.archive, rig.cfg));
  EXPECT_EQ(monitor_sweep(batch, rig.archive, rig.cfg), monitor_sweep(batch, rig.archive, rig.cfg));
}

TEST(Archive, BitExactRoundTrip) {
  SmallRig rig;
  const auto text = serialize_archive(rig.archive);
  const auto again = load_archive(text);
  EXPECT_TRUE(again == rig.archive);
  EXPECT_EQ(serialize_archive(again), text);
}

TEST(Archive, RejectsGroupsThatDoNotTile) {
  SmallRig rig;
  auto doc = json::parse(serialize_archive(rig.archive), "t");
  auto& first = doc["probes"].begin().value();
  first["groups"][0][1] = first["groups"][0][1].get<int>() + 1;
  EXPECT_THROW(archive_from_json(doc), ParseError);
}

TEST(BatchIo, CsvRoundTrip) {
  const EventBatch b(3, {ProbeId("a"), ProbeId("b")}, {{1.5, kNoHit, -2}, {0.1, 0.2, kNoHit}});
  const auto text = write_batch_csv(b);
  EXPECT_EQ(text, "1.5,0.1\n,0.2\n-2,\n");
  const std::vector<ProbeId> order{ProbeId("a"), ProbeId("b")};
  EXPECT_TRUE(parse_batch(text, order) == b);
}

TEST(BatchIo, CsvErrorsCarryLine) {
  const std::vector<ProbeId> order{ProbeId("a"), ProbeId("b")};
  try {
    parse_batch_csv("1,2\n3,x\n", order);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_batch_csv("1,2,3\n", order), ParseError);
  EXPECT_THROW(parse_batch_csv("1\n", order), ParseError);
  EXPECT_THROW(parse_batch_csv("# only a comment\n", order), ParseError);
}

TEST(BatchIo, SingleProbeBlankLineIsAMissingReading) {
  const std::vector<ProbeId> order{ProbeId("a")};
  const auto b = parse_batch_csv("1\n\n3\n", order);
  EXPECT_EQ(b.event_count(), 3u);
  EXPECT_TRUE(is_no_hit(b.readings(0)[1]));
}

TEST(BatchIo, JsonLines) {
  const std::vector<ProbeId> order{ProbeId("a"), ProbeId("b")};
  const auto b = parse_batch("{\"a\": 1, \"b\": null}\n{\"b\": 2}\n", order);
  EXPECT_EQ(b.event_count(), 2u);
  EXPECT_EQ(b.readings(0)[0], 1.0);
  EXPECT_TRUE(is_no_hit(b.readings(1)[0]));
  EXPECT_TRUE(is_no_hit(b.readings(0)[1]));
  EXPECT_THROW(parse_batch("{\"zz\": 1}\n", order), ParseError);
}

}  // namespace
