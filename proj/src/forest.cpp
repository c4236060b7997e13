#include "commdyn/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

#include "commdyn/error.hpp"

namespace commdyn {

namespace {

using json = nlohmann::ordered_json;

constexpr double kTieTolerance = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform draw in [0, n) that does not depend on the standard library's
// distribution implementation.
std::size_t draw_below(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

// An example reaching a node. `weight` is its bootstrap multiplicity; out-of-bag
// examples travel with weight 0 and only break ties between equally good splits.
struct Sample {
  const FeatureVector* x;
  Label label;
  std::size_t weight;
};

double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

double split_impurity(double left_pos, double left_n, double total_pos, double total_n) {
  const double right_n = total_n - left_n;
  return (left_n * gini(left_pos, left_n) + right_n * gini(total_pos - left_pos, right_n)) / total_n;
}

class TreeGrower {
 public:
  TreeGrower(const ForestConfig& config, std::uint64_t seed) : config_(config), rng_(seed) {}

  DecisionTree grow(std::vector<Sample> samples) {
    nodes_.clear();
    build(samples, 0);
    return DecisionTree(std::move(nodes_));
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();       // in-bag, weighted
    double full_impurity = std::numeric_limits<double>::infinity();  // every example at the node
  };

  int build(std::vector<Sample>& samples, std::size_t depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    std::size_t weight = 0, pos = 0;
    for (const auto& s : samples) {
      weight += s.weight;
      if (s.label == Label::Positive) pos += s.weight;
    }
    const bool pure = pos == 0 || pos == weight;

    Split split;
    if (!pure && depth < config_.max_depth && weight >= 2 * config_.min_leaf) {
      split = best_split(samples, weight, pos);
    }
    if (split.feature < 0) {
      nodes_[index].leaf = 2 * pos > weight ? Label::Positive : Label::Negative;
      return index;
    }

    const auto f = static_cast<std::size_t>(split.feature);
    std::vector<Sample> left, right;
    for (const auto& s : samples) ((*s.x)[f] <= split.threshold ? left : right).push_back(s);

    nodes_[index].feature = split.feature;
    nodes_[index].threshold = split.threshold;
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    nodes_[index].left = l;
    nodes_[index].right = r;
    return index;
  }

  Split best_split(const std::vector<Sample>& samples, std::size_t weight, std::size_t weight_pos) {
    std::array<std::size_t, kFeatureCount> order;
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = kFeatureCount - 1; i > 0; --i) std::swap(order[i], order[draw_below(rng_, i + 1)]);

    Split best;
    std::size_t examined = 0;
    std::vector<Sample> column(samples);
    const std::size_t n = samples.size();
    const auto all_pos = static_cast<double>(std::count_if(
        samples.begin(), samples.end(), [](const Sample& s) { return s.label == Label::Positive; }));
    const auto w = static_cast<double>(weight);
    const auto w_pos = static_cast<double>(weight_pos);

    // Features constant over the in-bag examples do not count toward features_per_split.
    for (const auto f : order) {
      if (examined == config_.features_per_split) break;
      std::stable_sort(column.begin(), column.end(),
                       [f](const Sample& l, const Sample& r) { return (*l.x)[f] < (*r.x)[f]; });
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& s : column) {
        if (s.weight == 0) continue;
        lo = std::min(lo, (*s.x)[f]);
        hi = std::max(hi, (*s.x)[f]);
      }
      if (!(lo < hi)) continue;
      ++examined;

      std::size_t left_w = 0, left_w_pos = 0, left_pos = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& s = column[i];
        left_w += s.weight;
        if (s.label == Label::Positive) {
          left_w_pos += s.weight;
          ++left_pos;
        }
        const double a = (*s.x)[f];
        const double b = (*column[i + 1].x)[f];
        if (a == b) continue;
        if (left_w < config_.min_leaf || weight - left_w < config_.min_leaf) continue;
        const double impurity =
            split_impurity(static_cast<double>(left_w_pos), static_cast<double>(left_w), w_pos, w);
        const double full = split_impurity(static_cast<double>(left_pos), static_cast<double>(i + 1), all_pos,
                                           static_cast<double>(n));
        const bool better = impurity < best.impurity - kTieTolerance ||
                            (impurity <= best.impurity + kTieTolerance && full < best.full_impurity - kTieTolerance);
        if (better) {
          double mid = a + 0.5 * (b - a);
          if (!(mid < b)) mid = a;
          best = {static_cast<int>(f), mid, impurity, full};
        }
      }
    }
    return best;
  }

  const ForestConfig& config_;
  std::mt19937_64 rng_;
  std::vector<TreeNode> nodes_;
};

json node_to_json(const std::vector<TreeNode>& nodes, int i) {
  const auto& n = nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf()) return json{{"leaf", label_name(n.leaf)}};
  json j;
  j["feature"] = n.feature;
  j["name"] = kFeatureNames[static_cast<std::size_t>(n.feature)];
  j["threshold"] = n.threshold;
  j["left"] = node_to_json(nodes, n.left);
  j["right"] = node_to_json(nodes, n.right);
  return j;
}

int node_from_json(const json& j, std::vector<TreeNode>& nodes, std::size_t depth) {
  if (depth > 64) throw Error(ErrorCode::ModelFormat, "tree nesting too deep");
  const int index = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (j.contains("leaf")) {
    const auto label = parse_label(j.at("leaf").get<std::string>());
    if (!label) throw Error(ErrorCode::ModelFormat, "bad leaf label");
    nodes[static_cast<std::size_t>(index)].leaf = *label;
    return index;
  }
  const int feature = j.at("feature").get<int>();
  if (feature < 0 || feature >= static_cast<int>(kFeatureCount)) {
    throw Error(ErrorCode::ModelFormat, "split feature out of range");
  }
  const double threshold = j.at("threshold").get<double>();
  const int l = node_from_json(j.at("left"), nodes, depth + 1);
  const int r = node_from_json(j.at("right"), nodes, depth + 1);
  auto& n = nodes[static_cast<std::size_t>(index)];
  n.feature = feature;
  n.threshold = threshold;
  n.left = l;
  n.right = r;
  return index;
}

}  // namespace

std::string_view label_name(Label label) {
  return label == Label::Positive ? "positive" : "negative";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "positive" || text == "pos" || text == "1" || text == "true") return Label::Positive;
  if (text == "negative" || text == "neg" || text == "0" || text == "false") return Label::Negative;
  return std::nullopt;
}

void ForestConfig::validate() const {
  if (n_trees < 1) throw Error(ErrorCode::InvalidParams, "n_trees must be >= 1");
  if (max_depth < 1) throw Error(ErrorCode::InvalidParams, "max_depth must be >= 1");
  if (min_leaf < 1) throw Error(ErrorCode::InvalidParams, "min_leaf must be >= 1");
  if (features_per_split < 1 || features_per_split > kFeatureCount) {
    throw Error(ErrorCode::InvalidParams, "features_per_split must be in [1, 14]");
  }
}

Prediction Prediction::from_confidence(double confidence) {
  return {confidence > 0.5 ? Label::Positive : Label::Negative, confidence};
}

Label DecisionTree::predict(const FeatureVector& x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].leaf;
}

std::size_t DecisionTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[i].is_leaf()) {
      stack.push_back({static_cast<std::size_t>(nodes_[i].left), d + 1});
      stack.push_back({static_cast<std::size_t>(nodes_[i].right), d + 1});
    }
  }
  return best;
}

Prediction ForestModel::predict(const FeatureVector& x) const {
  std::size_t votes = 0;
  for (const auto& t : trees) votes += t.predict(x) == Label::Positive ? 1 : 0;
  return Prediction::from_confidence(static_cast<double>(votes) / static_cast<double>(trees.size()));
}

ForestModel train(std::span<const LabeledExample> examples, const ForestConfig& config,
                  std::string class_name) {
  config.validate();
  if (examples.empty()) throw Error(ErrorCode::EmptyTraining, "no training examples");
  for (const auto& e : examples) {
    if (!std::all_of(e.features.values.begin(), e.features.values.end(),
                     [](double v) { return std::isfinite(v); })) {
      throw Error(ErrorCode::InvalidParams, "non-finite feature in example " + e.episode_ref);
    }
  }

  std::vector<const LabeledExample*> sorted;
  for (const auto& e : examples) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* l, const auto* r) {
    if (l->episode_ref != r->episode_ref) return l->episode_ref < r->episode_ref;
    if (l->label != r->label) return l->label < r->label;
    return l->features.values < r->features.values;
  });

  std::vector<Sample> positives, negatives;
  for (const auto* e : sorted) {
    (e->label == Label::Positive ? positives : negatives).push_back({&e->features, e->label, 1});
  }
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorCode::NeedsBothClasses,
                "training needs at least one positive and one negative example");
  }

  ForestModel model;
  model.config = config;
  model.class_name = std::move(class_name);
  model.feature_names.assign(kFeatureNames.begin(), kFeatureNames.end());
  model.trees.reserve(config.n_trees);

  for (std::size_t t = 0; t < config.n_trees; ++t) {
    const std::uint64_t tree_seed = splitmix64(config.rng_seed ^ splitmix64(t));
    TreeGrower grower(config, tree_seed);
    std::mt19937_64 resample(splitmix64(tree_seed));
    std::vector<Sample> bag;
    bag.reserve(sorted.size());
    for (const auto* group : {&positives, &negatives}) {
      const std::size_t first = bag.size();
      for (const auto& s : *group) bag.push_back({s.x, s.label, config.bootstrap ? 0u : 1u});
      if (config.bootstrap) {
        for (std::size_t k = 0; k < group->size(); ++k) ++bag[first + draw_below(resample, group->size())].weight;
      }
    }
    model.trees.push_back(grower.grow(std::move(bag)));
  }
  return model;
}

Prediction predict(const ForestModel& model, const FeatureVector& features) {
  return model.predict(features);
}

std::vector<ScoredEpisode> score_episodes(const ForestModel& model, std::span<const Episode> episodes) {
  std::vector<ScoredEpisode> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) {
    if (!e.features) throw Error(ErrorCode::MissingFeatures, "episode " + e.ref + " has no features");
    out.push_back({e.ref, e.start, model.predict(*e.features)});
  }
  return out;
}

std::vector<ScoredEpisode> rank_uncertain(std::span<const ScoredEpisode> scored) {
  std::vector<ScoredEpisode> out(scored.begin(), scored.end());
  std::stable_sort(out.begin(), out.end(), [](const ScoredEpisode& l, const ScoredEpisode& r) {
    const double dl = std::abs(l.prediction.confidence - 0.5);
    const double dr = std::abs(r.prediction.confidence - 0.5);
    if (std::abs(dl - dr) > kTieTolerance) return dl < dr;
    if (l.start != r.start) return l.start < r.start;
    return l.ref < r.ref;
  });
  return out;
}

std::vector<ScoredEpisode> rank_uncertain(const ForestModel& model, std::span<const Episode> episodes) {
  const auto scored = score_episodes(model, episodes);
  return rank_uncertain(scored);
}

std::vector<ScoredEpisode> filter_confident(std::span<const ScoredEpisode> scored,
                                            double min_confidence, Label polarity) {
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) {
    throw Error(ErrorCode::InvalidParams, "min_confidence must lie in [0, 1]");
  }
  std::vector<ScoredEpisode> out;
  for (const auto& s : scored) {
    if (s.prediction.label != polarity) continue;
    const double c = s.prediction.confidence;
    const bool keep = polarity == Label::Positive ? c >= min_confidence : 1.0 - c >= min_confidence;
    if (keep) out.push_back(s);
  }
  return out;
}

std::string_view combine_mode_name(CombineMode mode) { return mode == CombineMode::And ? "and" : "or"; }

std::optional<CombineMode> parse_combine_mode(std::string_view text) {
  if (text == "and" || text == "AND") return CombineMode::And;
  if (text == "or" || text == "OR") return CombineMode::Or;
  return std::nullopt;
}

Prediction combine_predictions(std::span<const Prediction> members, CombineMode mode) {
  if (members.empty()) throw Error(ErrorCode::EmptyCombination, "no predictions to combine");
  Prediction out = members.front();
  for (const auto& p : members.subspan(1)) {
    if (mode == CombineMode::And) {
      out.label = (out.label == Label::Positive && p.label == Label::Positive) ? Label::Positive
                                                                               : Label::Negative;
      out.confidence = std::min(out.confidence, p.confidence);
    } else {
      out.label = (out.label == Label::Positive || p.label == Label::Positive) ? Label::Positive
                                                                               : Label::Negative;
      out.confidence = std::max(out.confidence, p.confidence);
    }
  }
  return out;
}

CompositeModel::CompositeModel(std::vector<ForestModel> members, CombineMode mode)
    : members_(std::move(members)), mode_(mode) {
  if (members_.empty()) throw Error(ErrorCode::EmptyCombination, "no models to combine");
}

Prediction CompositeModel::predict(const FeatureVector& x) const {
  std::vector<Prediction> votes;
  votes.reserve(members_.size());
  for (const auto& m : members_) votes.push_back(m.predict(x));
  return combine_predictions(votes, mode_);
}

CompositeModel combine(std::vector<ForestModel> models, CombineMode mode) {
  return CompositeModel(std::move(models), mode);
}

std::string model_to_json(const ForestModel& model) {
  json j;
  j["version"] = kModelFormatVersion;
  j["class_name"] = model.class_name;
  j["config"] = {{"n_trees", model.config.n_trees},
                 {"max_depth", model.config.max_depth},
                 {"min_leaf", model.config.min_leaf},
                 {"features_per_split", model.config.features_per_split},
                 {"bootstrap", model.config.bootstrap},
                 {"rng_seed", model.config.rng_seed}};
  j["feature_names"] = model.feature_names;
  auto trees = json::array();
  for (const auto& t : model.trees) trees.push_back(node_to_json(t.nodes(), 0));
  j["trees"] = std::move(trees);
  return j.dump();
}

ForestModel model_from_json(std::string_view document) {
  try {
    const auto j = json::parse(document);
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::ModelFormat, "unsupported model version");
    }
    ForestModel m;
    m.class_name = j.at("class_name").get<std::string>();
    const auto& c = j.at("config");
    m.config.n_trees = c.at("n_trees").get<std::size_t>();
    m.config.max_depth = c.at("max_depth").get<std::size_t>();
    m.config.min_leaf = c.at("min_leaf").get<std::size_t>();
    m.config.features_per_split = c.at("features_per_split").get<std::size_t>();
    m.config.bootstrap = c.at("bootstrap").get<bool>();
    m.config.rng_seed = c.at("rng_seed").get<std::uint64_t>();
    m.config.validate();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (m.feature_names.size() != kFeatureCount) {
      throw Error(ErrorCode::ModelFormat, "model must name 14 features");
    }
    for (const auto& t : j.at("trees")) {
      std::vector<TreeNode> nodes;
      node_from_json(t, nodes, 0);
      m.trees.emplace_back(std::move(nodes));
    }
    if (m.trees.size() != m.config.n_trees) {
      throw Error(ErrorCode::ModelFormat, "tree count does not match config");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ModelFormat, std::string("malformed model document: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidParams) throw Error(ErrorCode::ModelFormat, e.what());
    throw;
  }
}

}  // namespace commdyn
