#include "commdyn/episodes.hpp"

#include <algorithm>
#include <cmath>

#include "commdyn/error.hpp"

namespace commdyn {

std::string_view epsilon_mode_name(EpsilonMode mode) {
  return mode == EpsilonMode::Absolute ? "absolute" : "relative";
}

std::optional<EpsilonMode> parse_epsilon_mode(std::string_view name) {
  if (name == "absolute" || name == "abs") return EpsilonMode::Absolute;
  if (name == "relative" || name == "relative-to-peak" || name == "rel") {
    return EpsilonMode::RelativeToPeak;
  }
  return std::nullopt;
}

void EpsilonSpec::validate() const {
  if (!std::isfinite(value) || value <= 0.0) {
    throw Error(ErrorCode::InvalidParams, "epsilon must be a positive finite value");
  }
  if (mode == EpsilonMode::RelativeToPeak && value >= 1.0) {
    throw Error(ErrorCode::InvalidParams, "relative epsilon must lie in (0, 1)");
  }
}

double EpsilonSpec::resolve(const DensityProfile& profile) const {
  validate();
  if (mode == EpsilonMode::Absolute) return value;
  return value * profile.peak_total();
}

std::vector<Episode> segment(const DensityProfile& profile, double epsilon, double min_duration,
                             double merge_gap) {
  if (!std::isfinite(epsilon) || epsilon <= 0.0) {
    throw Error(ErrorCode::InvalidParams, "epsilon must be a positive finite value");
  }
  if (!(min_duration >= 0.0) || !(merge_gap >= 0.0)) {
    throw Error(ErrorCode::InvalidParams, "min_duration and merge_gap must be >= 0");
  }
  std::vector<Episode> out;
  const auto& grid = profile.grid;
  if (profile.f_in.size() != grid.n || profile.f_out.size() != grid.n) return out;

  const auto total = profile.total();
  auto crossing = [&](std::size_t below, std::size_t above) {
    // Linear interpolation between a sample <= epsilon and one > epsilon.
    const double vb = total[below];
    const double va = total[above];
    const double frac = (epsilon - vb) / (va - vb);
    return grid.at(below) + frac * (grid.at(above) - grid.at(below));
  };

  std::size_t i = 0;
  while (i < grid.n) {
    if (!(total[i] > epsilon)) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    while (i < grid.n && total[i] > epsilon) ++i;
    const std::size_t last = i - 1;

    Episode ep;
    ep.start = first == 0 ? grid.start : crossing(first - 1, first);
    ep.end = last + 1 == grid.n ? grid.end() : crossing(last + 1, last);
    if (!out.empty() && ep.start - out.back().end < merge_gap) {
      out.back().end = ep.end;
    } else {
      out.push_back(std::move(ep));
    }
  }

  std::erase_if(out, [&](const Episode& e) { return e.duration() < min_duration; });
  return out;
}

std::vector<std::size_t> assign_events(const PairSequence& seq, std::span<Episode> episodes) {
  std::vector<std::size_t> residual;
  for (auto& ep : episodes) ep.event_indices.clear();

  std::size_t k = 0;
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const double t = seq.events[i].timestamp;
    while (k < episodes.size() && episodes[k].end < t) ++k;
    if (k < episodes.size() && episodes[k].start <= t) {
      episodes[k].event_indices.push_back(i);
    } else {
      residual.push_back(i);
    }
  }
  return residual;
}

void ZoomLevel::validate() const {
  if (!std::isfinite(range_fraction_h) || range_fraction_h <= 0.0) {
    throw Error(ErrorCode::InvalidParams, "zoom range fraction must be > 0");
  }
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw Error(ErrorCode::InvalidParams, "zoom sigma must be > 0");
  }
  epsilon.validate();
}

const std::vector<ZoomLevel>& builtin_zoom_levels() {
  static const std::vector<ZoomLevel> levels = {
      {"coarse", 1.0 / 50.0, 1.0, {}},
      {"medium", 1.0 / 200.0, 1.0, {}},
      {"fine", 1.0 / 1000.0, 1.0, {}},
  };
  return levels;
}

std::optional<ZoomLevel> find_zoom_level(std::string_view name) {
  for (const auto& level : builtin_zoom_levels()) {
    if (level.name == name) return level;
  }
  return std::nullopt;
}

ZoomParams zoom_params(double view_range, const ZoomLevel& level) {
  if (!std::isfinite(view_range) || view_range <= 0.0) {
    throw Error(ErrorCode::InvalidParams, "view range must be > 0");
  }
  level.validate();
  ZoomParams out;
  out.kde.mu = 0.0;
  out.kde.sigma = level.sigma;
  out.kde.h = level.range_fraction_h * view_range;
  out.epsilon = level.epsilon;
  return out;
}

}  // namespace commdyn
