#include "commdyn/analysis.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>

#include "commdyn/error.hpp"
#include "commdyn/features.hpp"
#include "commdyn/text.hpp"

namespace commdyn {

namespace {

constexpr double kDegenerateViewRange = 86400.0;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

ResolvedParams resolve_params(const PairSequence& seq, const DetectionParams& params) {
  if (params.from.has_value() != params.to.has_value()) {
    throw Error(ErrorCode::InvalidParams, "from and to must be given together");
  }
  const auto level = find_zoom_level(params.zoom_level);
  if (!level) throw Error(ErrorCode::InvalidParams, "unknown zoom level " + params.zoom_level);

  double view = 0.0;
  if (params.from) {
    if (!(*params.to > *params.from)) throw Error(ErrorCode::InvalidInterval, "view needs to > from");
    view = *params.to - *params.from;
  } else if (!seq.empty()) {
    const auto [lo, hi] = std::minmax_element(
        seq.events.begin(), seq.events.end(),
        [](const SequenceEvent& l, const SequenceEvent& r) { return l.timestamp < r.timestamp; });
    view = hi->timestamp - lo->timestamp;
  }
  if (!(view > 0.0)) view = kDegenerateViewRange;

  ResolvedParams r;
  r.zoom_level = level->name;
  r.kde = zoom_params(view, *level).kde;
  if (params.mu) r.kde.mu = *params.mu;
  if (params.sigma) r.kde.sigma = *params.sigma;
  if (params.h) r.kde.h = *params.h;
  r.kde.validate();
  params.epsilon.validate();
  r.epsilon = params.epsilon;
  if (!(params.min_duration >= 0.0) || !(params.merge_gap >= 0.0)) {
    throw Error(ErrorCode::InvalidParams, "min_duration and merge_gap must be >= 0");
  }
  r.min_duration = params.min_duration;
  r.merge_gap = params.merge_gap;
  r.grid = params.from ? grid_over(*params.from, *params.to, params.grid_n)
                       : default_grid(seq, r.kde, params.grid_n);
  return r;
}

DensityProfile analyze_profile(const PairSequence& seq, const DetectionParams& params) {
  const auto r = resolve_params(seq, params);
  return profile_pair(seq, r.kde, r.grid);
}

PairAnalysis analyze_pair(PairSequence seq, const DetectionParams& params) {
  PairAnalysis out;
  out.params = resolve_params(seq, params);
  out.seq = std::move(seq);
  out.profile = profile_pair(out.seq, out.params.kde, out.params.grid);
  if (out.seq.empty()) return out;

  out.params.epsilon_abs = out.params.epsilon.resolve(out.profile);
  if (!(out.params.epsilon_abs > 0.0)) return out;
  out.episodes = segment(out.profile, out.params.epsilon_abs, out.params.min_duration,
                         out.params.merge_gap);
  out.residual = assign_events(out.seq, out.episodes);
  for (auto& e : out.episodes) {
    e.a = out.seq.a;
    e.b = out.seq.b;
    e.ref = episode_ref(e.a, e.b, e.start, e.end, out.params);
    if (!e.event_indices.empty()) e.features = compute_features(out.seq, out.profile, e);
  }
  return out;
}

std::string episode_ref(const EntityId& a, const EntityId& b, double start, double end,
                        const ResolvedParams& p) {
  using text::format_number;
  std::string key;
  for (const std::string& part :
       {a, b, format_number(start), format_number(end), format_number(p.kde.mu),
        format_number(p.kde.sigma), format_number(p.kde.h),
        std::string(epsilon_mode_name(p.epsilon.mode)), format_number(p.epsilon.value),
        format_number(p.min_duration), format_number(p.merge_gap), format_number(p.grid.start),
        format_number(p.grid.step), std::to_string(p.grid.n)}) {
    key += part;
    key += '|';
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(key)));
  return buf;
}

}  // namespace commdyn
