#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "mldiag/mldiag.hpp"

namespace mldiag::testkit {

// Random model: `n_components` components over `n_probes` probes, each
// component depending on a random subset (possibly empty). Classes come
// from a fixed small table.
inline DetectorModel random_model(std::uint64_t seed, int n_components, int n_probes, double density) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(density);
  std::vector<ComponentSpec> comps;
  std::vector<ProbeSpec> probes;
  DependencyMap deps;
  for (int p = 0; p < n_probes; ++p)
    probes.push_back({ProbeId("p" + std::to_string(p)), p % 2 ? "timing" : "amplitude"});
  for (int c = 0; c < n_components; ++c) {
    ComponentId id("c" + std::to_string(c));
    comps.push_back({id, c % 3 == 0 ? "board" : "sensor"});
    auto& row = deps[id];
    for (int p = 0; p < n_probes; ++p)
      if (edge(rng)) row.emplace_back("p" + std::to_string(p));
  }
  return DetectorModel(std::move(comps), std::move(probes), deps,
                       {{"board", {"dead", "stuck"}}, {"sensor", {"gain_drop"}}});
}

// Verdicts with BAD for the probe indices in `bad`.
inline std::vector<ProbeVerdict> verdicts_for(const DetectorModel& model, const std::vector<bool>& bad) {
  std::vector<ProbeVerdict> out;
  for (std::size_t p = 0; p < model.probe_count(); ++p)
    out.push_back({model.probe(p).id, bad[p] ? ProbeState::kBad : ProbeState::kOk, bad[p] ? 100.0 : 0.0, 1, 6.63});
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mldiag-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace mldiag::testkit
