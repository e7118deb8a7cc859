#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace mldiag {

// Per-probe summary features computed by the monitor and consumed by the
// behavioral level.
enum class Feature { kMean, kStd, kOccupancy, kUnderflowFrac, kOverflowFrac };

inline constexpr std::array<Feature, 5> kAllFeatures = {
    Feature::kMean, Feature::kStd, Feature::kOccupancy, Feature::kUnderflowFrac,
    Feature::kOverflowFrac};

inline constexpr std::string_view feature_name(Feature f) {
  switch (f) {
    case Feature::kMean: return "mean";
    case Feature::kStd: return "std";
    case Feature::kOccupancy: return "occupancy";
    case Feature::kUnderflowFrac: return "underflow_frac";
    case Feature::kOverflowFrac: return "overflow_frac";
  }
  return "?";
}

inline std::optional<Feature> parse_feature(std::string_view name) {
  for (Feature f : kAllFeatures)
    if (feature_name(f) == name) return f;
  return std::nullopt;
}

}  // namespace mldiag
