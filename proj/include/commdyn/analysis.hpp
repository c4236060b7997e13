#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "commdyn/density.hpp"
#include "commdyn/episodes.hpp"
#include "commdyn/event_log.hpp"

namespace commdyn {

/// Detection settings as a caller states them; unset kernel values come from
/// the zoom level applied to the viewed range.
struct DetectionParams {
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> h;
  std::string zoom_level = std::string(kDefaultZoomLevel);
  EpsilonSpec epsilon;
  double min_duration = 0.0;
  double merge_gap = 0.0;
  std::size_t grid_n = kDefaultGridSamples;
  std::optional<double> from;
  std::optional<double> to;
};

/// Concrete values a detection ran with.
struct ResolvedParams {
  KdeParams kde;
  Grid grid;
  EpsilonSpec epsilon;
  double epsilon_abs = 0.0;
  double min_duration = 0.0;
  double merge_gap = 0.0;
  std::string zoom_level;
};

struct PairAnalysis {
  PairSequence seq;
  ResolvedParams params;
  DensityProfile profile;
  std::vector<Episode> episodes;       // features set for every episode with events
  std::vector<std::size_t> residual;   // events between episodes
};

/// Kernel parameters and grid for a sequence under `params`. The viewed range
/// is [from, to] when given, else the sequence span (one day when degenerate).
ResolvedParams resolve_params(const PairSequence& seq, const DetectionParams& params);

/// Profile only, no segmentation.
DensityProfile analyze_profile(const PairSequence& seq, const DetectionParams& params);

/// profile -> segment -> assign_events -> compute_features, with refs.
PairAnalysis analyze_pair(PairSequence seq, const DetectionParams& params);

/// Stable content hash of (pair, interval, detection parameters), 16 hex digits.
std::string episode_ref(const EntityId& a, const EntityId& b, double start, double end,
                        const ResolvedParams& params);

}  // namespace commdyn
