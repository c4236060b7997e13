#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace commdyn {

inline constexpr std::size_t kFeatureCount = 14;

/// Column order of every feature vector and feature matrix.
enum class Feature : std::size_t {
  Duration,
  VolumeTotal,
  VolumeIn,
  VolumeOut,
  Balance,
  Synchronicity,
  CountIn,
  CountOut,
  PeakDensity,
  Initiator,
  Terminator,
  MeanResponseLatency,
  TurnCount,
  Burstiness,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "duration",    "volume_total", "volume_in",  "volume_out",
    "balance",     "synchronicity", "count_in",  "count_out",
    "peak_density", "initiator",   "terminator", "mean_response_latency",
    "turn_count",  "burstiness",
};

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

}  // namespace commdyn
