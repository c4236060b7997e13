#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "commdyn/density.hpp"
#include "commdyn/episodes.hpp"
#include "commdyn/event_log.hpp"
#include "commdyn/feature_vector.hpp"

namespace commdyn {

/// Inputs available to every feature extractor.
struct EpisodeContext {
  const PairSequence& seq;
  const DensityProfile& profile;
  const Episode& episode;
};

/// Named feature extractors, evaluated in registration order.
class FeatureRegistry {
 public:
  using Extractor = std::function<double(const EpisodeContext&)>;

  struct Entry {
    std::string name;
    std::string description;
    Extractor extract;
  };

  /// Throws Error(InvalidParams) on a duplicate name.
  void add(std::string name, std::string description, Extractor extract);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  std::vector<double> compute(const EpisodeContext& ctx) const;

  /// The 14 built-in features in kFeatureNames order.
  static const FeatureRegistry& standard();

 private:
  std::vector<Entry> entries_;
};

/// Integral of |n_in f_in - n_out f_out| over the episode divided by the
/// integral of n_in f_in + n_out f_out; 0 when the denominator vanishes.
double synchronicity(const DensityProfile& profile, const Episode& episode);

/// Requires assigned event indices; throws Error(EmptyEpisode) when none.
FeatureVector compute_features(const PairSequence& seq, const DensityProfile& profile,
                               const Episode& episode);

struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<FeatureVector> rows;
};

/// Throws Error(MissingFeatures) if any episode has no feature vector.
FeatureMatrix feature_matrix(std::span<const Episode> episodes);

/// Per-column min-max scaling to [0, 1] for export and visual comparison.
class MinMaxScaler {
 public:
  static MinMaxScaler fit(const FeatureMatrix& matrix);
  FeatureVector transform(const FeatureVector& v) const;

 private:
  FeatureVector min_;
  FeatureVector max_;
};

}  // namespace commdyn
