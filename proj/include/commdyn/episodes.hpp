#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commdyn/density.hpp"
#include "commdyn/event_log.hpp"
#include "commdyn/feature_vector.hpp"

namespace commdyn {

/// A maximal interval where f_in + f_out exceeds the detection threshold.
struct Episode {
  double start = 0.0;
  double end = 0.0;
  EntityId a;
  EntityId b;
  std::vector<std::size_t> event_indices;  // into the PairSequence, closed interval
  std::optional<FeatureVector> features;
  std::string ref;  // content hash, see episode_ref()

  double duration() const { return end - start; }
};

enum class EpsilonMode { Absolute, RelativeToPeak };

std::string_view epsilon_mode_name(EpsilonMode mode);
std::optional<EpsilonMode> parse_epsilon_mode(std::string_view name);

struct EpsilonSpec {
  EpsilonMode mode = EpsilonMode::RelativeToPeak;
  double value = 0.05;

  void validate() const;
  /// Threshold in density units for this profile.
  double resolve(const DensityProfile& profile) const;

  friend bool operator==(const EpsilonSpec&, const EpsilonSpec&) = default;
};

/// Runs of grid points with f_in + f_out > epsilon. Boundaries are placed at the
/// linearly interpolated epsilon crossing (or the grid edge); runs separated by
/// less than merge_gap are joined; runs shorter than min_duration are dropped.
std::vector<Episode> segment(const DensityProfile& profile, double epsilon, double min_duration = 0.0,
                             double merge_gap = 0.0);

/// Fills event_indices (closed intervals; an event on a shared boundary goes to
/// the earlier episode). Returns the indices of events outside every episode.
std::vector<std::size_t> assign_events(const PairSequence& seq, std::span<Episode> episodes);

struct ZoomLevel {
  std::string name;
  double range_fraction_h = 1.0 / 200.0;
  double sigma = 1.0;
  EpsilonSpec epsilon;

  void validate() const;
};

struct ZoomParams {
  KdeParams kde;
  EpsilonSpec epsilon;
};

/// coarse (h = range/50), medium (range/200), fine (range/1000).
const std::vector<ZoomLevel>& builtin_zoom_levels();
std::optional<ZoomLevel> find_zoom_level(std::string_view name);

inline constexpr std::string_view kDefaultZoomLevel = "medium";

ZoomParams zoom_params(double view_range, const ZoomLevel& level);

}  // namespace commdyn
