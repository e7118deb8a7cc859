#pragma once

// Command-line front end. `run` is the whole program minus process exit,
// so tests can drive it with captured streams.
//
// Exit codes: 0 healthy / success, 1 diagnosis produced (some probe BAD),
// 2 usage, parse, model or data error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mldiag/campaign_io.hpp"
#include "mldiag/error.hpp"
#include "mldiag/model.hpp"
#include "mldiag/monitor.hpp"
#include "mldiag/pipeline.hpp"
#include "mldiag/report.hpp"
#include "mldiag/simulator.hpp"

namespace mldiag::cli {

inline constexpr int kExitHealthy = 0;
inline constexpr int kExitDiagnosis = 1;
inline constexpr int kExitError = 2;

// Fixed timestamp for `simulate` and `generate` unless one is given, so
// that repeated campaigns produce identical files.
inline constexpr std::string_view kFixedEpoch = "1970-01-01T00:00:00Z";

struct RunConfig {
  std::optional<double> alpha;
  std::optional<int> bins;
  std::optional<int> sample_size;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
  std::string out;  // file; empty: standard output
  std::optional<std::string> timestamp;
  unsigned threads = 0;

  MonitorConfig apply(MonitorConfig c) const {
    if (alpha) c.alpha = *alpha;
    if (bins) c.bins = *bins;
    if (sample_size) c.sample_size = *sample_size;
    return c;
  }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read \"" + path + "\"");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write \"" + path.string() + "\"");
  out << content;
  if (!out) throw DataError("write failed for \"" + path.string() + "\"");
}

namespace detail {

inline std::string describe(const ParseError& e) {
  std::string s = e.what();
  if (!e.locus().empty()) s += " at " + e.locus();
  if (e.line() > 0) s += " (line " + std::to_string(e.line()) + ")";
  return s;
}

inline DetectorModel read_model(const std::string& path) {
  try {
    return load_model(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + describe(e), "");
  }
}

inline EventBatch read_batch(const std::string& path, const DetectorModel& model) {
  std::vector<ProbeId> order;
  for (const auto& p : model.probes()) order.push_back(p.id);
  try {
    return parse_batch(read_file(path), order);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + describe(e), "");
  }
}

inline BaselineArchive read_archive(const std::string& path) {
  try {
    return load_archive(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + describe(e), "");
  }
}

}  // namespace detail

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Multi-level diagnosis for large sensor systems", "mldiag"};
    app.require_subcommand(1);
    app.fallthrough();
    add_globals(app);

    std::string model_path, baseline_path, batch_path, campaign_path, out_dir, spec_path, fault;
    std::vector<std::string> batch_paths;
    double magnitude = 5.0;
    int n_batches = 10;

    auto* validate = app.add_subcommand("validate", "Load and validate a model; list diagnostics");
    validate->add_option("model", model_path, "Model JSON")->required();

    auto* baseline = app.add_subcommand("baseline", "Build a baseline archive from fault-free batches");
    baseline->add_option("model", model_path, "Model JSON")->required();
    baseline->add_option("batches", batch_paths, "Batch files (CSV or JSON lines), at least 2")->required();

    auto* monitor = app.add_subcommand("monitor", "Chi-square sweep: per-probe OK/BAD verdicts");
    auto* diagnose = app.add_subcommand("diagnose", "Full pipeline: verdicts, suspects, ranked hypotheses");
    for (auto* sub : {monitor, diagnose}) {
      sub->add_option("model", model_path, "Model JSON")->required();
      sub->add_option("baseline", baseline_path, "Baseline archive")->required();
      sub->add_option("batch", batch_path, "Batch file")->required();
    }

    auto* simulate = app.add_subcommand("simulate", "Run a simulation campaign");
    simulate->add_option("campaign", campaign_path, "Campaign JSON")->required();
    simulate->add_option("--out-dir", out_dir, "Directory for per-trial reports and aggregate.json");

    auto* generate = app.add_subcommand("generate", "Write a synthetic model, baseline batches and a sweep batch");
    generate->add_option("--out-dir", out_dir, "Output directory")->required();
    generate->add_option("--spec", spec_path, "Synthetic spec JSON (defaults otherwise)");
    generate->add_option("--fault", fault, "Fault for the sweep batch, as component/failure_type");
    generate->add_option("--magnitude", magnitude, "Fault magnitude")->check(CLI::PositiveNumber);
    generate->add_option("--batches", n_batches, "Baseline batches to write")->check(CLI::Range(2, 1000));

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      out_ << app.help();
      return kExitHealthy;
    } catch (const CLI::CallForAllHelp& e) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return kExitHealthy;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitError;
    }

    try {
      if (*validate) return cmd_validate(model_path);
      if (*baseline) return cmd_baseline(model_path, batch_paths);
      if (*monitor) return cmd_monitor(model_path, baseline_path, batch_path);
      if (*diagnose) return cmd_diagnose(model_path, baseline_path, batch_path);
      if (*simulate) return cmd_simulate(campaign_path, out_dir);
      if (*generate) return cmd_generate(out_dir, spec_path, fault, magnitude, n_batches);
    } catch (const ParseError& e) {
      err_ << "error: " << detail::describe(e) << "\n";
      return kExitError;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitError;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitError;
    }
    return kExitError;
  }

 private:
  void add_globals(CLI::App& app) {
    app.add_option("--alpha", cfg_.alpha, "Per-probe significance level")
        ->envname("MLDIAG_ALPHA")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--bins", cfg_.bins, "Histogram bins")->envname("MLDIAG_BINS")->check(CLI::Range(2, 100000));
    app.add_option("--sample-size", cfg_.sample_size, "Events per batch")
        ->envname("MLDIAG_SAMPLE_SIZE")
        ->check(CLI::Range(30, 100000000));
    app.add_option("--seed", cfg_.seed, "Seed override")->envname("MLDIAG_SEED");
    app.add_option("--format", cfg_.format, "Output format")
        ->envname("MLDIAG_FORMAT")
        ->check(CLI::IsMember({"json", "table"}));
    app.add_option("--out", cfg_.out, "Write the document here instead of standard output")->envname("MLDIAG_OUT");
    app.add_option("--timestamp", cfg_.timestamp, "Timestamp recorded in reports")->envname("MLDIAG_TIMESTAMP");
    app.add_option("--threads", cfg_.threads, "Worker threads for simulate (0: all cores)")->envname("MLDIAG_THREADS");
  }

  std::string timestamp(bool fixed_default) const {
    if (cfg_.timestamp) return *cfg_.timestamp;
    if (fixed_default) return std::string(kFixedEpoch);
    return report::utc_timestamp(std::chrono::system_clock::now());
  }

  void emit(const std::string& text) {
    if (cfg_.out.empty()) out_ << text;
    else write_file(cfg_.out, text);
  }

  void emit_document(const json::Json& doc) {
    emit(cfg_.format == "table" ? report::render_table(doc) : json::dump(doc));
  }

  int cmd_validate(const std::string& path) {
    json::Json doc;
    try {
      doc = json::parse(read_file(path), "model");
      model_from_json(doc);
    } catch (const ParseError& e) {
      err_ << "error: " << path << ": " << detail::describe(e) << "\n";
      return kExitError;
    } catch (const ModelError& e) {
      err_ << "error: " << path << ": " << e.what() << "\n";
      return kExitError;
    }
    const auto model = model_from_json(doc);
    const auto diags = validate_model(model);
    if (cfg_.format == "json") {
      json::Json out = {{"model", path},
                        {"components", model.component_count()},
                        {"probes", model.probe_count()},
                        {"diagnostics", json::Json::array()}};
      for (const auto& d : diags)
        out["diagnostics"].push_back(
            {{"severity", d.severity == Diagnostic::Severity::kError ? "error" : "warning"},
             {"code", d.code},
             {"message", d.message}});
      emit(json::dump(out));
    } else {
      std::ostringstream os;
      os << path << ": " << model.component_count() << " components, " << model.probe_count() << " probes\n";
      for (const auto& d : diags)
        os << (d.severity == Diagnostic::Severity::kError ? "error" : "warning") << ": " << d.code << ": "
           << d.message << "\n";
      os << diags.size() << " diagnostic(s)\n";
      emit(os.str());
    }
    for (const auto& d : diags)
      if (d.is_error()) return kExitError;
    return kExitHealthy;
  }

  int cmd_baseline(const std::string& model_path, const std::vector<std::string>& batch_paths) {
    const auto model = detail::read_model(model_path);
    if (batch_paths.size() < 2) throw DataError("baseline needs at least 2 batches, got " + std::to_string(batch_paths.size()));
    std::vector<EventBatch> batches;
    for (const auto& p : batch_paths) batches.push_back(detail::read_batch(p, model));
    auto config = cfg_.apply(MonitorConfig{});
    config.baseline_samples = static_cast<int>(batches.size());
    emit(serialize_archive(build_baseline(batches, config)));
    return kExitHealthy;
  }

  // Inputs shared by monitor and diagnose; the batch must cover exactly the
  // model's probes and the archive must cover every probe.
  struct SweepInputs {
    DetectorModel model;
    BaselineArchive archive;
    EventBatch batch;
    MonitorConfig config;
  };

  SweepInputs load_sweep(const std::string& model_path, const std::string& baseline_path,
                         const std::string& batch_path) {
    SweepInputs in{detail::read_model(model_path), detail::read_archive(baseline_path), {}, {}};
    in.batch = detail::read_batch(batch_path, in.model);
    for (const auto& p : in.model.probes())
      if (!in.archive.probes.contains(p.id)) throw DataError("baseline archive lacks probe \"" + p.id.str() + "\"");
    in.config = cfg_.apply(MonitorConfig{});
    in.config.baseline_samples = in.archive.samples;
    in.config.sample_size = static_cast<int>(in.batch.event_count());
    in.config.bins = static_cast<int>(in.archive.probes.begin()->second.edges.size()) - 1;
    return in;
  }

  int cmd_monitor(const std::string& model_path, const std::string& baseline_path, const std::string& batch_path) {
    const auto in = load_sweep(model_path, baseline_path, batch_path);
    const auto verdicts = monitor_sweep(in.batch, in.archive, in.config);
    emit_document(report::monitor_report(verdicts, in.config, timestamp(false)));
    for (const auto& v : verdicts)
      if (v.state == ProbeState::kBad) return kExitDiagnosis;
    return kExitHealthy;
  }

  int cmd_diagnose(const std::string& model_path, const std::string& baseline_path, const std::string& batch_path) {
    const auto in = load_sweep(model_path, baseline_path, batch_path);
    const auto result = run_pipeline(in.model, in.archive, in.batch, in.config);
    emit_document(report::diagnosis_report(result, in.config, timestamp(false)));
    return result.healthy() ? kExitHealthy : kExitDiagnosis;
  }

  int cmd_simulate(const std::string& campaign_path, const std::string& out_dir) {
    sim::Campaign campaign;
    try {
      campaign = sim::load_campaign(read_file(campaign_path));
    } catch (const ParseError& e) {
      throw ParseError(campaign_path + ": " + detail::describe(e), "");
    }
    campaign.config = cfg_.apply(campaign.config);
    if (cfg_.seed) campaign.seed = *cfg_.seed;
    const std::string ts = timestamp(true);
    const auto result = sim::run_campaign(campaign, cfg_.threads);
    const auto aggregate = report::aggregate_to_json(result.aggregate, campaign.config, campaign.seed, ts);
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      const int width = std::max<int>(4, static_cast<int>(std::to_string(result.trials.size()).size()));
      for (std::size_t i = 0; i < result.trials.size(); ++i) {
        std::string n = std::to_string(i);
        n.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0');
        write_file(std::filesystem::path(out_dir) / ("trial-" + n + ".json"),
                   json::dump(report::trial_report(result.trials[i], campaign.config, ts)));
      }
      write_file(std::filesystem::path(out_dir) / "aggregate.json", json::dump(aggregate));
    }
    emit_document(aggregate);
    return kExitHealthy;
  }

  int cmd_generate(const std::string& out_dir, const std::string& spec_path, const std::string& fault,
                   double magnitude, int n_batches) {
    sim::SyntheticSpec spec;
    if (!spec_path.empty()) spec = sim::spec_from_json(json::parse(read_file(spec_path), "spec"), "");
    const auto det = sim::build_synthetic_model(spec);
    const auto config = cfg_.apply(MonitorConfig{});
    const std::uint64_t seed = cfg_.seed.value_or(1);

    std::optional<sim::FaultScenario> scenario;
    if (!fault.empty()) {
      const auto slash = fault.find('/');
      if (slash == std::string::npos) throw DataError("--fault expects component/failure_type");
      scenario = sim::FaultScenario{ComponentId(fault.substr(0, slash)), fault.substr(slash + 1), magnitude,
                                    sim::derive_seed(seed, 0x5000)};
      sim::probe_effects(det, *scenario);  // validates the pair
    }

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "model.json", serialize_model(det.model));
    const auto events = static_cast<std::size_t>(config.sample_size);
    for (int b = 0; b < n_batches; ++b) {
      std::string name = "baseline-" + std::string(b < 10 ? "0" : "") + std::to_string(b) + ".csv";
      write_file(dir / name, write_batch_csv(sim::generate_events(det, std::nullopt, events, sim::baseline_batch_seed(seed, b))));
    }
    write_file(dir / "sweep.csv", write_batch_csv(sim::generate_events(det, scenario, events, sim::sweep_batch_seed(seed))));
    json::Json manifest = {{"model", "model.json"},
                           {"spec", sim::spec_to_json(spec)},
                           {"seed", seed},
                           {"sample_size", config.sample_size},
                           {"baseline_batches", n_batches},
                           {"truth", scenario ? report::scenario_to_json(*scenario) : json::Json(nullptr)}};
    write_file(dir / "manifest.json", json::dump(manifest));
    emit(json::dump(manifest));
    return kExitHealthy;
  }

  std::ostream& out_;
  std::ostream& err_;
  RunConfig cfg_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Cli(out, err).run(argc, argv);
}

}  // namespace mldiag::cli
