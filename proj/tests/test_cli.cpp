#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "mldiag/cli.hpp"
#include "support.hpp"

namespace {

using namespace mldiag;
using testkit::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "mldiag");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small generated data set: 16-channel detector, 10 baseline batches.
struct Workspace {
  TempDir dir{"cli"};
  explicit Workspace(const std::string& fault = "") {
    cli::write_file(dir.file("spec.json"), R"({"n_slats": 8})");
    std::vector<std::string> args{"--seed", "5", "--sample-size", "1000", "generate", "--out-dir", dir.file("data"),
                                  "--spec", dir.file("spec.json")};
    if (!fault.empty()) {
      args.push_back("--fault");
      args.push_back(fault);
      args.push_back("--magnitude");
      args.push_back("7");
    }
    const auto r = run(args);
    if (r.code != 0) throw std::runtime_error(r.err);
  }
  std::string data(const std::string& name) const { return dir.file("data/" + name); }
  std::vector<std::string> baselines() const {
    std::vector<std::string> out;
    for (int b = 0; b < 10; ++b) out.push_back(data("baseline-0" + std::to_string(b) + ".csv"));
    return out;
  }
  Outcome build_baseline(const std::string& out_file) const {
    std::vector<std::string> args{"--out", out_file, "baseline", data("model.json")};
    for (const auto& b : baselines()) args.push_back(b);
    return run(args);
  }
};

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("diagnose"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) { EXPECT_EQ(run({"frobnicate"}).code, cli::kExitError); }

TEST(Cli, ValidateOutcomes) {
  TempDir d("validate");
  cli::write_file(d.file("ok.json"), serialize_model(sim::build_synthetic_model({.n_slats = 2}).model));
  auto r = run({"validate", d.file("ok.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out, "out")["diagnostics"].size(), 0u);

  cli::write_file(d.file("bad.json"), "{\"components\": [");
  r = run({"validate", d.file("bad.json")});
  EXPECT_EQ(r.code, cli::kExitError);
  EXPECT_NE(r.err.find("line"), std::string::npos);

  cli::write_file(d.file("dangling.json"), R"({"components": [{"id": "C", "class": "s"}], "probes": [],
    "depends": {"C": ["P9"]}, "classes": {"s": {"failure_types": ["f"]}}, "behavior": []})");
  r = run({"validate", d.file("dangling.json")});
  EXPECT_EQ(r.code, cli::kExitError);
  EXPECT_NE(r.err.find("P9"), std::string::npos);

  cli::write_file(d.file("warn.json"), R"({"components": [{"id": "C", "class": "s"}],
    "probes": [{"id": "P", "kind": "k"}], "depends": {}, "classes": {"s": {"failure_types": ["f"]}},
    "behavior": []})");
  r = run({"--format", "table", "validate", d.file("warn.json")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("warning"), std::string::npos);
}

TEST(Cli, BaselineIsReproducible) {
  Workspace ws;
  ASSERT_EQ(ws.build_baseline(ws.dir.file("a.json")).code, 0);
  ASSERT_EQ(ws.build_baseline(ws.dir.file("b.json")).code, 0);
  const auto a = cli::read_file(ws.dir.file("a.json"));
  EXPECT_EQ(a, cli::read_file(ws.dir.file("b.json")));
  EXPECT_EQ(load_archive(a).samples, 10);
}

TEST(Cli, BaselineNeedsTwoBatches) {
  Workspace ws;
  const auto r = run({"baseline", ws.data("model.json"), ws.baselines()[0]});
  EXPECT_EQ(r.code, cli::kExitError);
}

TEST(Cli, HealthySweepExitsZero) {
  Workspace ws;
  ASSERT_EQ(ws.build_baseline(ws.dir.file("base.json")).code, 0);
  const auto r = run({"--alpha", "1e-6", "diagnose", ws.data("model.json"), ws.dir.file("base.json"), ws.data("sweep.csv")});
  EXPECT_EQ(r.code, cli::kExitHealthy) << r.out;
  const auto doc = json::parse(r.out, "out");
  EXPECT_EQ(doc["kind"], "diagnosis");
  EXPECT_TRUE(doc["suspects"]["entries"].empty());
}

TEST(Cli, FaultySweepReportsSuspects) {
  Workspace ws("pmt.003/dead");
  ASSERT_EQ(ws.build_baseline(ws.dir.file("base.json")).code, 0);
  auto r = run({"--alpha", "1e-4", "diagnose", ws.data("model.json"), ws.dir.file("base.json"), ws.data("sweep.csv")});
  ASSERT_EQ(r.code, cli::kExitDiagnosis) << r.err;
  const auto doc = json::parse(r.out, "out");
  EXPECT_EQ(doc["hypotheses"][0]["hypothesis"], "pmt.003/dead");

  r = run({"--alpha", "1e-4", "monitor", ws.data("model.json"), ws.dir.file("base.json"), ws.data("sweep.csv")});
  EXPECT_EQ(r.code, cli::kExitDiagnosis);
  r = run({"--alpha", "1e-4", "--format", "table", "diagnose", ws.data("model.json"), ws.dir.file("base.json"),
           ws.data("sweep.csv")});
  EXPECT_NE(r.out.find("pmt.003"), std::string::npos);
}

TEST(Cli, MissingBaselineIsAnError) {
  Workspace ws;
  const auto r = run({"diagnose", ws.data("model.json"), ws.dir.file("nope.json"), ws.data("sweep.csv")});
  EXPECT_EQ(r.code, cli::kExitError);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, EnvironmentSuppliesDefaults) {
  Workspace ws("pmt.003/dead");
  ASSERT_EQ(ws.build_baseline(ws.dir.file("base.json")).code, 0);
  ::setenv("MLDIAG_ALPHA", "0.001", 1);
  const auto r = run({"monitor", ws.data("model.json"), ws.dir.file("base.json"), ws.data("sweep.csv")});
  ::unsetenv("MLDIAG_ALPHA");
  EXPECT_EQ(json::parse(r.out, "out")["config"]["alpha"], 0.001);
}

TEST(Cli, SimulateWritesReproducibleReports) {
  TempDir d("simulate");
  cli::write_file(d.file("campaign.json"), R"({"spec": {"n_slats": 8}, "config": {"alpha": 1e-4}, "seed": 3,
    "shared_baseline": true, "scenarios": [{"target": null}], "random": {"count": 3, "magnitude": [5, 8]}})");
  auto r1 = run({"simulate", d.file("campaign.json"), "--out-dir", d.file("one")});
  auto r2 = run({"--threads", "2", "simulate", d.file("campaign.json"), "--out-dir", d.file("two")});
  ASSERT_EQ(r1.code, 0) << r1.err;
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(r1.out, r2.out);
  for (const char* f : {"aggregate.json", "trial-0000.json", "trial-0003.json"})
    EXPECT_EQ(cli::read_file(d.file(std::string("one/") + f)), cli::read_file(d.file(std::string("two/") + f))) << f;
  EXPECT_EQ(json::parse(r1.out, "out")["trials"], 4);
}

TEST(Cli, SimulateEmptyCampaign) {
  TempDir d("empty");
  cli::write_file(d.file("c.json"), R"({"spec": {"n_slats": 2}})");
  const auto r = run({"simulate", d.file("c.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out, "out")["trials"], 0);
}

TEST(Cli, SimulateRejectsMalformedCampaign) {
  TempDir d("badcamp");
  cli::write_file(d.file("c.json"), R"({"random": {"count": 1, "pairs": [["pmt", "melted"]]}})");
  const auto r = run({"simulate", d.file("c.json")});
  EXPECT_EQ(r.code, cli::kExitError);
  EXPECT_NE(r.err.find("melted"), std::string::npos);
}

TEST(CliBinary, RunsAsSubprocess) {
  const std::string cmd = std::string(MLDIAG_CLI_PATH) + " --help > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  const std::string bad = std::string(MLDIAG_CLI_PATH) + " validate /nonexistent 2> /dev/null";
  const int status = std::system(bad.c_str());
  EXPECT_EQ(WEXITSTATUS(status), cli::kExitError);
}

}  // namespace
