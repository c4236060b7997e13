#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commdyn/analysis.hpp"
#include "commdyn/forest.hpp"

namespace commdyn {

// Text encodings shared by the CLI and the HTTP service. Every number is
// written in shortest round-trip form, so CSV and JSON carry identical values.

struct FeatureRow {
  std::string episode_id;
  FeatureVector features;
};

/// One "# pair=..." metadata line per analysis, then a header and one row per
/// episode: episode_id,a,b,start,end,n_in,n_out,<14 feature columns>.
void write_episodes_csv(std::ostream& out, std::span<const PairAnalysis> analyses);
std::string episodes_json(std::span<const PairAnalysis> analyses);

/// Rows of an episodes CSV that carry a complete feature vector.
std::vector<FeatureRow> read_feature_csv(std::string_view text);
std::vector<FeatureRow> read_feature_json(std::string_view text);

/// episode_id,label with a header row. Later rows override earlier ones.
std::map<std::string, Label> read_labels_csv(std::string_view text);
void write_labels_csv(std::ostream& out, const std::map<std::string, Label>& labels);

void write_predictions_csv(std::ostream& out, std::span<const ScoredEpisode> predictions);

void write_pairs_csv(std::ostream& out, std::span<const PairSummary> pairs);

}  // namespace commdyn
