#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "commdyn/episodes.hpp"
#include "commdyn/feature_vector.hpp"

namespace commdyn {

enum class Label : std::uint8_t { Negative, Positive };

std::string_view label_name(Label label);
/// Accepts positive/negative, pos/neg, 1/0, true/false.
std::optional<Label> parse_label(std::string_view text);

struct LabeledExample {
  std::string episode_ref;
  FeatureVector features;
  Label label = Label::Negative;
};

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 4;  // ceil(sqrt(14))
  bool bootstrap = true;
  std::uint64_t rng_seed = 0;

  void validate() const;
  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

/// Share of trees voting positive; label is positive iff confidence > 0.5.
struct Prediction {
  Label label = Label::Negative;
  double confidence = 0.0;

  static Prediction from_confidence(double confidence);
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct TreeNode {
  // Internal node when feature >= 0: x[feature] <= threshold goes left.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  Label leaf = Label::Negative;

  bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  Label predict(const FeatureVector& x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t depth() const;

 private:
  std::vector<TreeNode> nodes_;  // root at index 0
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  ForestConfig config;
  std::vector<std::string> feature_names;
  std::string class_name;

  Prediction predict(const FeatureVector& x) const;
};

/// Grows config.n_trees Gini trees. Each tree resamples positives and negatives
/// separately (so both classes reach every tree) after sorting the examples by
/// episode_ref; the result depends only on the example set and the seed.
/// Splits are scored on the resample; among equally scored thresholds the one
/// that best separates all examples at the node wins.
ForestModel train(std::span<const LabeledExample> examples, const ForestConfig& config,
                  std::string class_name = "relevant");

Prediction predict(const ForestModel& model, const FeatureVector& features);

struct ScoredEpisode {
  std::string ref;
  double start = 0.0;
  Prediction prediction;
};

/// Throws Error(MissingFeatures) for episodes without features.
std::vector<ScoredEpisode> score_episodes(const ForestModel& model, std::span<const Episode> episodes);

/// Ascending |confidence - 0.5|, ties by start time then ref.
std::vector<ScoredEpisode> rank_uncertain(std::span<const ScoredEpisode> scored);
std::vector<ScoredEpisode> rank_uncertain(const ForestModel& model, std::span<const Episode> episodes);

/// Positive polarity keeps confidence >= min_confidence; negative keeps
/// confidence <= 1 - min_confidence. Input order is preserved.
std::vector<ScoredEpisode> filter_confident(std::span<const ScoredEpisode> scored,
                                            double min_confidence, Label polarity);

enum class CombineMode { And, Or };

std::string_view combine_mode_name(CombineMode mode);
std::optional<CombineMode> parse_combine_mode(std::string_view text);

/// AND: positive iff all members positive, confidence = min.
/// OR: positive iff any member positive, confidence = max.
Prediction combine_predictions(std::span<const Prediction> members, CombineMode mode);

class CompositeModel {
 public:
  CompositeModel(std::vector<ForestModel> members, CombineMode mode);

  Prediction predict(const FeatureVector& x) const;
  const std::vector<ForestModel>& members() const { return members_; }
  CombineMode mode() const { return mode_; }

 private:
  std::vector<ForestModel> members_;
  CombineMode mode_;
};

/// Throws Error(EmptyCombination) for an empty member list.
CompositeModel combine(std::vector<ForestModel> models, CombineMode mode);

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ForestModel& model);
/// Throws Error(ModelFormat) on malformed or unsupported documents.
ForestModel model_from_json(std::string_view document);

}  // namespace commdyn
