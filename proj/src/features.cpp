#include "commdyn/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "commdyn/error.hpp"

namespace commdyn {

namespace {

std::vector<double> weighted(const std::vector<double>& f, std::size_t count) {
  std::vector<double> out(f.size());
  const double w = static_cast<double>(count);
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = w * f[i];
  return out;
}

double episode_integral(const std::vector<double>& samples, const DensityProfile& p,
                        const Episode& e) {
  return integrate(samples, p.grid, e.start, e.end);
}

const SequenceEvent& event_at(const EpisodeContext& c, std::size_t k) {
  return c.seq.events[c.episode.event_indices[k]];
}

double count_direction(const EpisodeContext& c, Direction d) {
  double n = 0.0;
  for (const auto i : c.episode.event_indices) n += c.seq.events[i].direction == d ? 1.0 : 0.0;
  return n;
}

double volume_in(const EpisodeContext& c) {
  return episode_integral(weighted(c.profile.f_in, c.profile.n_in), c.profile, c.episode);
}

double volume_out(const EpisodeContext& c) {
  return episode_integral(weighted(c.profile.f_out, c.profile.n_out), c.profile, c.episode);
}

// +1 when an outgoing message sits at the boundary timestamp, else -1.
double boundary_direction(const EpisodeContext& c, bool first) {
  const auto& idx = c.episode.event_indices;
  const double t = first ? event_at(c, 0).timestamp : event_at(c, idx.size() - 1).timestamp;
  for (const auto i : idx) {
    const auto& e = c.seq.events[i];
    if (e.timestamp == t && e.direction == Direction::Outgoing) return 1.0;
  }
  return -1.0;
}

double mean_response_latency(const EpisodeContext& c) {
  const auto n = c.episode.event_indices.size();
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& from = event_at(c, k);
    for (std::size_t j = k + 1; j < n; ++j) {
      const auto& to = event_at(c, j);
      if (to.direction != from.direction) {
        sum += to.timestamp - from.timestamp;
        ++pairs;
        break;
      }
    }
  }
  return pairs == 0 ? -1.0 : sum / static_cast<double>(pairs);
}

double turn_count(const EpisodeContext& c) {
  const auto n = c.episode.event_indices.size();
  double turns = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    if (event_at(c, k).direction != event_at(c, k - 1).direction) turns += 1.0;
  }
  return turns;
}

double burstiness(const EpisodeContext& c) {
  const auto n = c.episode.event_indices.size();
  if (n < 3) return 0.0;
  std::vector<double> gaps;
  gaps.reserve(n - 1);
  for (std::size_t k = 1; k < n; ++k) gaps.push_back(event_at(c, k).timestamp - event_at(c, k - 1).timestamp);
  const double m = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  double var = 0.0;
  for (const double g : gaps) var += (g - m) * (g - m);
  const double s = std::sqrt(var / static_cast<double>(gaps.size()));
  if (s + m == 0.0) return 0.0;
  return (s - m) / (s + m);
}

double peak_density(const EpisodeContext& c) {
  const auto& p = c.profile;
  const auto total = p.total();
  double peak = std::max(interpolate(total, p.grid, c.episode.start),
                         interpolate(total, p.grid, c.episode.end));
  for (std::size_t i = 0; i < p.grid.n; ++i) {
    const double t = p.grid.at(i);
    if (t >= c.episode.start && t <= c.episode.end) peak = std::max(peak, total[i]);
  }
  return peak;
}

FeatureRegistry make_standard() {
  FeatureRegistry r;
  r.add("duration", "episode length in seconds", [](const EpisodeContext& c) {
    return c.episode.end - c.episode.start;
  });
  r.add("volume_total", "count-weighted density integral, both directions",
        [](const EpisodeContext& c) { return volume_in(c) + volume_out(c); });
  r.add("volume_in", "count-weighted incoming density integral", volume_in);
  r.add("volume_out", "count-weighted outgoing density integral", volume_out);
  r.add("balance", "(volume_out - volume_in) / volume_total, 0 when empty",
        [](const EpisodeContext& c) {
          const double in = volume_in(c);
          const double out = volume_out(c);
          const double total = in + out;
          return total == 0.0 ? 0.0 : (out - in) / total;
        });
  r.add("synchronicity", "normalized integral of |g_in - g_out|, 0 mirrored, 1 one-sided",
        [](const EpisodeContext& c) { return synchronicity(c.profile, c.episode); });
  r.add("count_in", "incoming messages in the episode",
        [](const EpisodeContext& c) { return count_direction(c, Direction::Incoming); });
  r.add("count_out", "outgoing messages in the episode",
        [](const EpisodeContext& c) { return count_direction(c, Direction::Outgoing); });
  r.add("peak_density", "max of f_in + f_out inside the episode", peak_density);
  r.add("initiator", "+1 if the first message is outgoing, else -1 (ties: outgoing)",
        [](const EpisodeContext& c) { return boundary_direction(c, true); });
  r.add("terminator", "+1 if the last message is outgoing, else -1 (ties: outgoing)",
        [](const EpisodeContext& c) { return boundary_direction(c, false); });
  r.add("mean_response_latency", "mean gap to the next opposite-direction message, -1 if none",
        mean_response_latency);
  r.add("turn_count", "adjacent message pairs that change direction", turn_count);
  r.add("burstiness", "(s - m) / (s + m) of inter-message gaps, 0 below 3 messages", burstiness);
  return r;
}

}  // namespace

void FeatureRegistry::add(std::string name, std::string description, Extractor extract) {
  for (const auto& e : entries_) {
    if (e.name == name) throw Error(ErrorCode::InvalidParams, "duplicate feature name " + name);
  }
  entries_.push_back({std::move(name), std::move(description), std::move(extract)});
}

std::vector<std::string> FeatureRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<double> FeatureRegistry::compute(const EpisodeContext& ctx) const {
  if (ctx.episode.event_indices.empty()) {
    throw Error(ErrorCode::EmptyEpisode, "episode contains no events");
  }
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.extract(ctx));
  return out;
}

const FeatureRegistry& FeatureRegistry::standard() {
  static const FeatureRegistry registry = make_standard();
  return registry;
}

double synchronicity(const DensityProfile& profile, const Episode& episode) {
  const auto g_in = weighted(profile.f_in, profile.n_in);
  const auto g_out = weighted(profile.f_out, profile.n_out);
  std::vector<double> diff(g_in.size());
  std::vector<double> sum(g_in.size());
  for (std::size_t i = 0; i < g_in.size(); ++i) {
    diff[i] = std::abs(g_in[i] - g_out[i]);
    sum[i] = g_in[i] + g_out[i];
  }
  const double den = episode_integral(sum, profile, episode);
  if (den == 0.0) return 0.0;
  return std::clamp(episode_integral(diff, profile, episode) / den, 0.0, 1.0);
}

FeatureVector compute_features(const PairSequence& seq, const DensityProfile& profile,
                               const Episode& episode) {
  const auto values = FeatureRegistry::standard().compute({seq, profile, episode});
  FeatureVector v;
  std::copy(values.begin(), values.end(), v.values.begin());
  return v;
}

FeatureMatrix feature_matrix(std::span<const Episode> episodes) {
  FeatureMatrix m;
  m.columns.assign(kFeatureNames.begin(), kFeatureNames.end());
  m.rows.reserve(episodes.size());
  for (const auto& e : episodes) {
    if (!e.features) {
      throw Error(ErrorCode::MissingFeatures, "episode " + e.ref + " has no features");
    }
    m.rows.push_back(*e.features);
  }
  return m;
}

MinMaxScaler MinMaxScaler::fit(const FeatureMatrix& matrix) {
  MinMaxScaler s;
  if (matrix.rows.empty()) return s;
  s.min_ = matrix.rows.front();
  s.max_ = matrix.rows.front();
  for (const auto& row : matrix.rows) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      s.min_[i] = std::min(s.min_[i], row[i]);
      s.max_[i] = std::max(s.max_[i], row[i]);
    }
  }
  return s;
}

FeatureVector MinMaxScaler::transform(const FeatureVector& v) const {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double range = max_[i] - min_[i];
    out[i] = range > 0.0 ? std::clamp((v[i] - min_[i]) / range, 0.0, 1.0) : 0.0;
  }
  return out;
}

}  // namespace commdyn
