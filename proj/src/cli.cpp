#include "commdyn/cli.hpp"

#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "commdyn/analysis.hpp"
#include "commdyn/error.hpp"
#include "commdyn/forest.hpp"
#include "commdyn/server.hpp"
#include "commdyn/tables.hpp"
#include "commdyn/text.hpp"

namespace commdyn {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<std::string, std::string> parse_pair(const std::string& s) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
    throw UsageError("--pair expects a,b but got '" + s + "'");
  }
  return {std::string(parts[0]), std::string(parts[1])};
}

InputFormat parse_input_format(const std::string& s) {
  if (s == "auto") return InputFormat::Auto;
  if (s == "whitespace") return InputFormat::WhitespaceTriples;
  if (s == "csv") return InputFormat::CsvWithHeader;
  throw UsageError("unknown input format " + s);
}

std::vector<FeatureRow> read_features_any(const std::string& path) {
  const auto content = read_text_file(path);
  const auto body = text::trim(content);
  if (!body.empty() && body.front() == '{') return read_feature_json(content);
  return read_feature_csv(content);
}

// Options shared by `episodes` and `profile`.
struct DetectionOptions {
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> h;
  std::string zoom_level = std::string(kDefaultZoomLevel);
  std::string epsilon_mode = "relative";
  double epsilon = 0.05;
  double min_duration = 0.0;
  double merge_gap = 0.0;
  std::size_t grid_n = kDefaultGridSamples;
  std::optional<double> from;
  std::optional<double> to;

  void add_kde(CLI::App* app) {
    app->add_option("--mu", mu, "kernel center offset (bandwidth units) [default: 0]");
    app->add_option("--sigma", sigma, "kernel standard deviation (bandwidth units) [default: zoom level, 1]");
    app->add_option("--h", h, "bandwidth in seconds [default: zoom level fraction of the viewed range]");
    app->add_option("--zoom-level", zoom_level, "coarse (range/50), medium (range/200) or fine (range/1000)")
        ->capture_default_str();
    app->add_option("--grid-n", grid_n, "grid samples")->capture_default_str();
    app->add_option("--from", from, "view start (seconds); requires --to");
    app->add_option("--to", to, "view end (seconds); requires --from");
  }

  void add_segmentation(CLI::App* app) {
    app->add_option("--epsilon", epsilon, "density threshold")->capture_default_str();
    app->add_option("--epsilon-mode", epsilon_mode, "absolute or relative (to the peak total density)")
        ->capture_default_str();
    app->add_option("--min-duration", min_duration, "drop episodes shorter than this (seconds)")
        ->capture_default_str();
    app->add_option("--merge-gap", merge_gap, "join episodes closer than this (seconds)")
        ->capture_default_str();
  }

  DetectionParams params() const {
    DetectionParams p;
    p.mu = mu;
    p.sigma = sigma;
    p.h = h;
    p.zoom_level = zoom_level;
    const auto mode = parse_epsilon_mode(epsilon_mode);
    if (!mode) throw UsageError("--epsilon-mode must be absolute or relative");
    p.epsilon = {*mode, epsilon};
    p.min_duration = min_duration;
    p.merge_gap = merge_gap;
    p.grid_n = grid_n;
    p.from = from;
    p.to = to;
    return p;
  }
};

std::vector<PairAnalysis> analyze_pairs(const EventLog& log,
                                        const std::vector<std::pair<std::string, std::string>>& pairs,
                                        const DetectionParams& params) {
  const std::size_t batch = std::max(1u, std::thread::hardware_concurrency());
  std::vector<PairAnalysis> out;
  out.reserve(pairs.size());
  for (std::size_t begin = 0; begin < pairs.size(); begin += batch) {
    std::vector<std::future<PairAnalysis>> jobs;
    for (std::size_t i = begin; i < std::min(pairs.size(), begin + batch); ++i) {
      jobs.push_back(std::async(std::launch::async, [&log, &params, &pair = pairs[i]] {
        return analyze_pair(pair_sequence(log, pair.first, pair.second), params);
      }));
    }
    for (auto& j : jobs) out.push_back(j.get());
  }
  return out;
}

class OutputFile {
 public:
  OutputFile(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::trunc);
      if (!file_) throw Error(ErrorCode::IoError, "cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Communication density, episode segmentation and episode classification"};
  app.require_subcommand(1);
  // "--h" is the bandwidth option, so help gets no short form.
  app.set_help_flag("--help", "Print this help message and exit");

  // ingest
  std::string ingest_file;
  bool ingest_report = false;
  bool ingest_json = false;
  bool strict = false;
  std::string input_format = "auto";
  auto* ingest = app.add_subcommand("ingest", "parse a communication log and report its shape");
  ingest->add_option("file", ingest_file, "event log (.gz accepted)")->required();
  ingest->add_flag("--report", ingest_report, "write the parse report as text to stderr");
  ingest->add_flag("--json", ingest_json, "write the parse report as JSON to stdout");

  // pairs
  std::string pairs_file;
  std::size_t pairs_min = 1;
  std::string pairs_format = "csv";
  auto* pairs = app.add_subcommand("pairs", "list entity pairs by message count");
  pairs->add_option("file", pairs_file)->required();
  pairs->add_option("--min", pairs_min, "minimum total messages")->capture_default_str();
  pairs->add_option("--format", pairs_format, "csv or json")->capture_default_str();

  // episodes
  std::string episodes_file;
  std::vector<std::string> episode_pairs;
  std::string episodes_format = "csv";
  std::string episodes_out;
  DetectionOptions det;
  auto* episodes = app.add_subcommand("episodes", "segment pairs into episodes with features");
  episodes->add_option("file", episodes_file)->required();
  episodes->add_option("--pair", episode_pairs, "a,b (repeatable)")->required();
  det.add_kde(episodes);
  det.add_segmentation(episodes);
  episodes->add_option("--format", episodes_format, "csv or json")->capture_default_str();
  episodes->add_option("--out", episodes_out, "output file (default stdout)");

  // profile
  std::string profile_file;
  std::string profile_pair_arg;
  std::string profile_format = "csv";
  DetectionOptions prof;
  auto* profile = app.add_subcommand("profile", "sampled incoming/outgoing density for one pair");
  profile->add_option("file", profile_file)->required();
  profile->add_option("--pair", profile_pair_arg, "a,b")->required();
  prof.add_kde(profile);
  profile->add_option("--format", profile_format, "csv or json")->capture_default_str();

  for (auto* sub : {ingest, pairs, episodes, profile}) {
    sub->add_flag("--strict", strict, "abort on the first malformed record");
    sub->add_option("--input-format", input_format, "auto, whitespace or csv")->capture_default_str();
  }

  // train
  std::string train_features, train_labels, train_out, train_class = "relevant";
  ForestConfig forest;
  bool no_bootstrap = false;
  auto* train_cmd = app.add_subcommand("train", "train a forest from labeled episodes");
  train_cmd->add_option("--features", train_features, "episodes CSV or JSON")->required();
  train_cmd->add_option("--labels", train_labels, "CSV with episode_id,label")->required();
  train_cmd->add_option("--out", train_out, "model file")->required();
  train_cmd->add_option("--seed", forest.rng_seed, "random seed")->capture_default_str();
  train_cmd->add_option("--class", train_class, "class name")->capture_default_str();
  train_cmd->add_option("--trees", forest.n_trees, "number of trees")->capture_default_str();
  train_cmd->add_option("--max-depth", forest.max_depth)->capture_default_str();
  train_cmd->add_option("--min-leaf", forest.min_leaf)->capture_default_str();
  train_cmd->add_option("--features-per-split", forest.features_per_split)->capture_default_str();
  train_cmd->add_flag("--no-bootstrap", no_bootstrap, "grow every tree on the full label set");

  // predict
  std::string predict_model, predict_features, predict_out, predict_polarity = "positive";
  std::optional<double> min_confidence;
  auto* predict_cmd = app.add_subcommand("predict", "score episodes with a trained model");
  predict_cmd->add_option("--model", predict_model)->required();
  predict_cmd->add_option("--features", predict_features, "episodes CSV or JSON")->required();
  predict_cmd->add_option("--min-confidence", min_confidence,
                          "keep only predictions of --polarity at this confidence");
  predict_cmd->add_option("--polarity", predict_polarity, "positive or negative")->capture_default_str();
  predict_cmd->add_option("--out", predict_out, "output file (default stdout)");

  // serve
  ServerConfig server_config;
  std::vector<std::string> corpus_paths;
  std::string session_dir, ui_dir;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--corpus", corpus_paths, "event log(s)");
  serve->add_option("--port", server_config.port)->capture_default_str();
  serve->add_option("--host", server_config.host)->capture_default_str();
  serve->add_option("--session-dir", session_dir, "persist sessions here");
  serve->add_option("--ui-dir", ui_dir, "serve a built UI bundle from here");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    ParseOptions parse_options{parse_input_format(input_format), strict};

    if (*ingest) {
      const auto result = load_events(ingest_file, parse_options);
      if (ingest_json) out << report_json(result.report) << '\n';
      if (ingest_report || !ingest_json) write_report_text(err, result.report);
      return kExitOk;
    }

    if (*pairs) {
      if (pairs_min < 1) throw UsageError("--min must be >= 1");
      const auto log = load_events(pairs_file, parse_options).log;
      const auto rows = list_pairs(log, pairs_min);
      if (pairs_format == "json") {
        auto j = nlohmann::ordered_json::array();
        for (const auto& p : rows) {
          j.push_back({{"a", p.pair.lo}, {"b", p.pair.hi}, {"count_ab", p.count_ab},
                       {"count_ba", p.count_ba}, {"total", p.total()}});
        }
        out << j.dump() << '\n';
      } else if (pairs_format == "csv") {
        write_pairs_csv(out, rows);
      } else {
        throw UsageError("--format must be csv or json");
      }
      return kExitOk;
    }

    if (*episodes) {
      if (episodes_format != "csv" && episodes_format != "json") throw UsageError("--format must be csv or json");
      std::vector<std::pair<std::string, std::string>> pair_list;
      for (const auto& p : episode_pairs) pair_list.push_back(parse_pair(p));
      const auto params = det.params();
      const auto log = load_events(episodes_file, parse_options).log;
      const auto analyses = analyze_pairs(log, pair_list, params);
      OutputFile file(episodes_out, out);
      if (episodes_format == "json") {
        file.get() << episodes_json(analyses) << '\n';
      } else {
        write_episodes_csv(file.get(), analyses);
      }
      return kExitOk;
    }

    if (*profile) {
      const auto [a, b] = parse_pair(profile_pair_arg);
      const auto params = prof.params();
      const auto log = load_events(profile_file, parse_options).log;
      const auto p = analyze_profile(pair_sequence(log, a, b), params);
      if (profile_format == "json") {
        out << profile_json(p) << '\n';
      } else if (profile_format == "csv") {
        write_profile_csv(out, p);
      } else {
        throw UsageError("--format must be csv or json");
      }
      return kExitOk;
    }

    if (*train_cmd) {
      forest.bootstrap = !no_bootstrap;
      const auto rows = read_features_any(train_features);
      const auto labels = read_labels_csv(read_text_file(train_labels));
      std::map<std::string, const FeatureRow*> by_id;
      for (const auto& r : rows) by_id[r.episode_id] = &r;
      std::vector<LabeledExample> examples;
      std::size_t stale = 0;
      for (const auto& [id, label] : labels) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
          ++stale;
          continue;
        }
        examples.push_back({id, it->second->features, label});
      }
      if (stale > 0) err << "warning: " << stale << " labeled episode(s) not found in the feature table\n";
      const auto model = train(examples, forest, train_class);
      OutputFile file(train_out, out);
      file.get() << model_to_json(model) << '\n';
      return kExitOk;
    }

    if (*predict_cmd) {
      const auto polarity = parse_label(predict_polarity);
      if (!polarity) throw UsageError("--polarity must be positive or negative");
      const auto model = model_from_json(read_text_file(predict_model));
      const auto rows = read_features_any(predict_features);
      std::vector<ScoredEpisode> scored;
      scored.reserve(rows.size());
      for (const auto& r : rows) scored.push_back({r.episode_id, 0.0, model.predict(r.features)});
      if (min_confidence) scored = filter_confident(scored, *min_confidence, *polarity);
      OutputFile file(predict_out, out);
      write_predictions_csv(file.get(), scored);
      return kExitOk;
    }

    if (*serve) {
      // Environment first, explicit flags on top.
      ServerConfig config = apply_env(ServerConfig{});
      if (serve->count("--port")) config.port = server_config.port;
      if (serve->count("--host")) config.host = server_config.host;
      if (!corpus_paths.empty()) config.corpus_paths.assign(corpus_paths.begin(), corpus_paths.end());
      if (!session_dir.empty()) config.session_dir = session_dir;
      if (!ui_dir.empty()) config.ui_dir = ui_dir;
      Server server(config);
      const int port = server.bind();
      err << "listening on " << config.host << ':' << port << '\n';
      server.listen();
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << code_name(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidParams ? kExitUsage : kExitData;
  }
  return kExitUsage;
}

}  // namespace commdyn
