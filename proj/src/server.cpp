#include "commdyn/server.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

#include "commdyn/analysis.hpp"
#include "commdyn/error.hpp"
#include "commdyn/event_log.hpp"
#include "commdyn/forest.hpp"
#include "commdyn/lru_cache.hpp"
#include "commdyn/tables.hpp"
#include "commdyn/text.hpp"

namespace commdyn {

namespace {

using json = nlohmann::ordered_json;

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NeedsBothClasses:
    case ErrorCode::EmptyTraining:
    case ErrorCode::EmptyCombination:
    case ErrorCode::EmptyEpisode:
    case ErrorCode::MissingFeatures:
      return 422;
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  json j;
  j["error"] = {{"code", e.code}, {"message", e.message}};
  send_json(res, e.status, j.dump());
}

std::optional<std::string> query(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

std::optional<double> query_number(const httplib::Request& req, const char* name) {
  const auto raw = query(req, name);
  if (!raw) return std::nullopt;
  const auto v = text::parse_double(*raw);
  if (!v) throw HttpError{400, "invalid-params", std::string("query parameter ") + name + " is not a number"};
  return v;
}

std::optional<std::size_t> query_count(const httplib::Request& req, const char* name) {
  const auto raw = query(req, name);
  if (!raw) return std::nullopt;
  const auto v = text::parse_integer(*raw);
  if (!v || *v < 0) throw HttpError{400, "invalid-params", std::string("query parameter ") + name + " is not a count"};
  return static_cast<std::size_t>(*v);
}

DetectionParams detection_from_query(const httplib::Request& req) {
  DetectionParams p;
  p.mu = query_number(req, "mu");
  p.sigma = query_number(req, "sigma");
  p.h = query_number(req, "h");
  if (const auto z = query(req, "zoom_level")) p.zoom_level = *z;
  if (const auto mode = query(req, "epsilon_mode")) {
    const auto parsed = parse_epsilon_mode(*mode);
    if (!parsed) throw HttpError{400, "invalid-params", "epsilon_mode must be absolute or relative"};
    p.epsilon.mode = *parsed;
  }
  if (const auto e = query_number(req, "epsilon")) p.epsilon.value = *e;
  if (const auto v = query_number(req, "min_duration")) p.min_duration = *v;
  if (const auto v = query_number(req, "merge_gap")) p.merge_gap = *v;
  if (const auto v = query_count(req, "grid_n")) p.grid_n = *v;
  p.from = query_number(req, "from");
  p.to = query_number(req, "to");
  return p;
}

std::string canonical_query(const httplib::Request& req) {
  std::map<std::string, std::string> sorted(req.params.begin(), req.params.end());
  std::string out;
  for (const auto& [k, v] : sorted) out += k + "=" + v + "&";
  return out;
}

std::string random_token() {
  static std::atomic<std::uint64_t> counter{0};
  std::random_device rd;
  const std::uint64_t x = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ (++counter * 0x9e3779b97f4a7c15ULL);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

json prediction_row(const std::string& ref, const std::string& a, const std::string& b, double start,
                    double end, const Prediction& p) {
  json j;
  j["episode_ref"] = ref;
  j["pair"] = {a, b};
  j["start"] = start;
  j["end"] = end;
  j["label"] = label_name(p.label);
  j["confidence"] = p.confidence;
  return j;
}

}  // namespace

ServerConfig apply_env(ServerConfig config) {
  if (const char* v = std::getenv("COMMDYN_HOST")) config.host = v;
  if (const char* v = std::getenv("COMMDYN_PORT")) {
    if (const auto port = text::parse_integer(v)) config.port = static_cast<int>(*port);
  }
  if (const char* v = std::getenv("COMMDYN_CORPUS")) {
    config.corpus_paths.clear();
    for (const auto part : text::split(v, ':')) {
      if (!part.empty()) config.corpus_paths.emplace_back(std::string(part));
    }
  }
  if (const char* v = std::getenv("COMMDYN_SESSION_DIR")) config.session_dir = v;
  if (const char* v = std::getenv("COMMDYN_UI_DIR")) config.ui_dir = v;
  return config;
}

struct Server::Impl {
  struct Corpus {
    std::string id;
    std::filesystem::path path;
    EventLog log;
    ParseReport report;
  };

  struct CatalogEntry {
    std::string corpus;
    std::string a;
    std::string b;
    double start = 0.0;
    double end = 0.0;
    std::optional<FeatureVector> features;
  };

  struct ModelEntry {
    std::shared_ptr<const ForestModel> forest;
    std::shared_ptr<const CompositeModel> composite;
    std::vector<std::string> members;
    CombineMode mode = CombineMode::And;
    std::uint64_t version = 0;

    Prediction predict(const FeatureVector& x) const {
      return forest ? forest->predict(x) : composite->predict(x);
    }
  };

  struct TrainingStatus {
    std::string state = "idle";
    std::uint64_t version = 0;
    std::string error;
  };

  struct Session {
    std::mutex mutex;
    std::string id;
    std::string corpus;
    std::map<std::string, Label> labels;
    std::map<std::string, ModelEntry> models;
    std::map<std::string, TrainingStatus> status;
    std::map<std::string, std::uint64_t> versions;  // survives model replacement
    json view_state = json::object();
  };

  explicit Impl(ServerConfig c) : config(std::move(c)), profile_cache(config.profile_cache_entries) {
    for (std::size_t i = 0; i < config.corpus_paths.size(); ++i) {
      const auto& path = config.corpus_paths[i];
      if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::IoError, "cannot read corpus " + path.string());
      }
      auto parsed = load_events(path);
      corpora.push_back({std::to_string(i), path, std::move(parsed.log), std::move(parsed.report)});
    }
    if (config.session_dir) {
      std::filesystem::create_directories(*config.session_dir);
      load_sessions();
    }
    routes();
  }

  ~Impl() {
    http.stop();
    std::lock_guard lock(jobs_mutex);
    for (auto& job : jobs) job.wait();
  }

  // ---- lookup helpers ----

  const Corpus& corpus_for(const httplib::Request& req) {
    if (corpora.empty()) throw HttpError{404, "unknown-corpus", "no corpus loaded"};
    const auto id = query(req, "corpus").value_or(corpora.front().id);
    for (const auto& c : corpora) {
      if (c.id == id || c.path.stem().string() == id) return c;
    }
    throw HttpError{404, "unknown-corpus", "unknown corpus " + id};
  }

  PairSequence pair_for(const Corpus& c, const std::string& a, const std::string& b) {
    if (a == b) throw HttpError{400, "invalid-pair", "pair endpoints must differ"};
    if (c.log.pair_event_indices(PairKey::of(a, b)).empty()) {
      throw HttpError{404, "unknown-pair", "no messages between " + a + " and " + b};
    }
    return pair_sequence(c.log, a, b);
  }

  std::shared_ptr<Session> session(const std::string& id) {
    std::shared_lock lock(sessions_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError{404, "unknown-session", "unknown session " + id};
    return it->second;
  }

  void register_episodes(const std::string& corpus, const PairAnalysis& analysis) {
    std::lock_guard lock(catalog_mutex);
    for (const auto& e : analysis.episodes) {
      catalog[e.ref] = CatalogEntry{corpus, e.a, e.b, e.start, e.end, e.features};
    }
  }

  // ---- persistence ----

  json session_json(const Session& s) const {
    json j;
    j["id"] = s.id;
    j["corpus"] = s.corpus;
    json labels = json::object();
    for (const auto& [ref, label] : s.labels) labels[ref] = label_name(label);
    j["labels"] = std::move(labels);
    j["view_state"] = s.view_state;
    json models = json::object();
    for (const auto& [name, m] : s.models) {
      json entry;
      entry["version"] = m.version;
      if (m.forest) {
        entry["kind"] = "forest";
        entry["model"] = json::parse(model_to_json(*m.forest));
      } else {
        entry["kind"] = "composite";
        entry["mode"] = combine_mode_name(m.mode);
        entry["members"] = m.members;
      }
      models[name] = std::move(entry);
    }
    j["models"] = std::move(models);
    return j;
  }

  void persist(const Session& s) const {
    if (!config.session_dir) return;
    const auto path = *config.session_dir / (s.id + ".json");
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << session_json(s).dump(2);
    }
    std::filesystem::rename(tmp, path);
  }

  void load_sessions() {
    for (const auto& entry : std::filesystem::directory_iterator(*config.session_dir)) {
      if (entry.path().extension() != ".json") continue;
      std::ifstream in(entry.path());
      const auto j = json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.contains("id")) continue;
      auto s = std::make_shared<Session>();
      s->id = j.at("id").get<std::string>();
      s->corpus = j.value("corpus", std::string("0"));
      for (const auto& [ref, label] : j.at("labels").items()) {
        if (const auto l = parse_label(label.get<std::string>())) s->labels[ref] = *l;
      }
      s->view_state = j.value("view_state", json::object());
      std::vector<std::pair<std::string, json>> composites;
      for (const auto& [name, m] : j.at("models").items()) {
        if (m.at("kind") == "forest") {
          ModelEntry e;
          e.forest = std::make_shared<ForestModel>(model_from_json(m.at("model").dump()));
          e.version = m.at("version").get<std::uint64_t>();
          s->versions[name] = e.version;
          s->models[name] = std::move(e);
        } else {
          composites.emplace_back(name, m);
        }
      }
      for (const auto& [name, m] : composites) {
        try {
          auto e = make_composite(*s, m.at("members").get<std::vector<std::string>>(),
                                  *parse_combine_mode(m.at("mode").get<std::string>()));
          e.version = m.at("version").get<std::uint64_t>();
          s->versions[name] = e.version;
          s->models[name] = std::move(e);
        } catch (const HttpError&) {
          // member model missing on disk; the composite is not restored
        }
      }
      sessions[s->id] = std::move(s);
    }
  }

  // ---- model helpers (caller holds the session lock) ----

  ModelEntry make_composite(const Session& s, const std::vector<std::string>& members, CombineMode mode) {
    if (members.empty()) throw Error(ErrorCode::EmptyCombination, "no member models given");
    std::vector<ForestModel> forests;
    for (const auto& name : members) {
      const auto it = s.models.find(name);
      if (it == s.models.end()) throw HttpError{404, "unknown-class", "unknown model " + name};
      if (!it->second.forest) throw HttpError{400, "invalid-params", "composite members must be trained models"};
      forests.push_back(*it->second.forest);
    }
    ModelEntry e;
    e.composite = std::make_shared<CompositeModel>(std::move(forests), mode);
    e.members = members;
    e.mode = mode;
    return e;
  }

  struct TrainingJob {
    std::vector<LabeledExample> examples;
    std::vector<std::string> stale;
    ForestConfig config;
  };

  TrainingJob prepare_training(const Session& s, const json& body) {
    TrainingJob job;
    {
      std::lock_guard lock(catalog_mutex);
      for (const auto& [ref, label] : s.labels) {
        const auto it = catalog.find(ref);
        if (it == catalog.end() || !it->second.features) {
          job.stale.push_back(ref);
          continue;
        }
        job.examples.push_back({ref, *it->second.features, label});
      }
    }
    if (body.is_object()) {
      job.config.n_trees = body.value("n_trees", job.config.n_trees);
      job.config.max_depth = body.value("max_depth", job.config.max_depth);
      job.config.min_leaf = body.value("min_leaf", job.config.min_leaf);
      job.config.features_per_split = body.value("features_per_split", job.config.features_per_split);
      job.config.bootstrap = body.value("bootstrap", job.config.bootstrap);
      job.config.rng_seed = body.value("seed", job.config.rng_seed);
    }
    job.config.validate();
    if (job.examples.empty()) throw Error(ErrorCode::EmptyTraining, "no labeled episodes resolve in the catalog");
    const bool has_pos = std::any_of(job.examples.begin(), job.examples.end(),
                                     [](const auto& e) { return e.label == Label::Positive; });
    const bool has_neg = std::any_of(job.examples.begin(), job.examples.end(),
                                     [](const auto& e) { return e.label == Label::Negative; });
    if (!has_pos || !has_neg) {
      throw Error(ErrorCode::NeedsBothClasses, "training needs at least one positive and one negative label");
    }
    return job;
  }

  std::uint64_t install_model(Session& s, const std::string& name, ForestModel model) {
    ModelEntry e;
    e.forest = std::make_shared<ForestModel>(std::move(model));
    e.version = ++s.versions[name];
    s.models[name] = std::move(e);
    s.status[name] = {"done", s.versions[name], ""};
    persist(s);
    return s.versions[name];
  }

  // ---- routes ----

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        send_error(res, {status_for(e.code()), std::string(code_name(e.code())), e.what()});
      } catch (const nlohmann::json::exception& e) {
        send_error(res, {400, "invalid-json", e.what()});
      } catch (const std::exception& e) {
        send_error(res, {500, "internal", e.what()});
      }
    };
  }

  static json parse_body(const httplib::Request& req) {
    if (text::trim(req.body).empty()) return json::object();
    return json::parse(req.body);
  }

  void routes() {
    http.set_default_headers({{"Access-Control-Allow-Origin", config.cors_origin}});
    http.Options(R"(/api/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    if (config.ui_dir) http.set_mount_point("/", config.ui_dir->string());

    http.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      json j;
      j["status"] = "ok";
      auto corpora_json = json::array();
      for (const auto& c : corpora) {
        corpora_json.push_back({{"id", c.id},
                                {"path", c.path.string()},
                                {"loaded", true},
                                {"events", c.log.size()},
                                {"entities", c.report.entities},
                                {"active_entities", c.report.active_entities},
                                {"directed_pairs", c.report.directed_pairs},
                                {"unordered_pairs", c.report.unordered_pairs},
                                {"self_loops", c.report.self_loops},
                                {"skipped", c.report.skipped},
                                {"span_days", c.report.span_days()}});
      }
      j["corpus"] = corpora_json.empty() ? json(nullptr) : corpora_json.front();
      j["corpora"] = std::move(corpora_json);
      send_json(res, 200, j.dump());
    }));

    http.Get("/api/pairs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto& c = corpus_for(req);
      const auto min = query_count(req, "min").value_or(1);
      if (min < 1) throw HttpError{400, "invalid-params", "min must be >= 1"};
      json rows = json::array();
      for (const auto& p : list_pairs(c.log, min)) {
        rows.push_back({{"a", p.pair.lo}, {"b", p.pair.hi}, {"count_ab", p.count_ab},
                        {"count_ba", p.count_ba}, {"total", p.total()}});
      }
      send_json(res, 200, json{{"pairs", std::move(rows)}}.dump());
    }));

    http.Get(R"(/api/pairs/([^/]+)/([^/]+)/profile)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto& c = corpus_for(req);
               const std::string a = req.matches[1];
               const std::string b = req.matches[2];
               const auto key = c.id + "|" + a + "|" + b + "|" + canonical_query(req);
               if (auto cached = profile_cache.get(key)) return send_json(res, 200, *cached);
               const auto seq = pair_for(c, a, b);
               const auto body = profile_json(analyze_profile(seq, detection_from_query(req)));
               profile_cache.put(key, body);
               send_json(res, 200, body);
             }));

    http.Get(R"(/api/pairs/([^/]+)/([^/]+)/episodes)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto& c = corpus_for(req);
               auto seq = pair_for(c, req.matches[1], req.matches[2]);
               const auto analysis = analyze_pair(std::move(seq), detection_from_query(req));
               register_episodes(c.id, analysis);
               send_json(res, 200, episodes_json(std::span(&analysis, 1)));
             }));

    http.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      auto s = std::make_shared<Session>();
      s->id = random_token();
      s->corpus = corpora.empty() ? "" : corpora.front().id;
      if (body.contains("view_state")) s->view_state = body.at("view_state");
      {
        std::unique_lock lock(sessions_mutex);
        sessions[s->id] = s;
      }
      std::lock_guard lock(s->mutex);
      persist(*s);
      send_json(res, 200, json{{"id", s->id}, {"labels", json::object()}}.dump());
    }));

    http.Get(R"(/api/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session(req.matches[1]);
      std::lock_guard lock(s->mutex);
      auto j = session_json(*s);
      // Models are summarized; full documents live under /models/{class}.
      json models = json::object();
      for (const auto& [name, m] : s->models) {
        models[name] = {{"version", m.version}, {"kind", m.forest ? "forest" : "composite"}};
      }
      j["models"] = std::move(models);
      json stale = json::array();
      {
        std::lock_guard catalog_lock(catalog_mutex);
        for (const auto& [ref, label] : s->labels) {
          if (!catalog.contains(ref)) stale.push_back(ref);
        }
      }
      j["stale_labels"] = std::move(stale);
      send_json(res, 200, j.dump());
    }));

    http.Put(R"(/api/sessions/([^/]+)/labels)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = session(req.matches[1]);
      const auto body = parse_body(req);
      const auto ref = body.at("episode_ref").get<std::string>();
      const auto value = body.at("label").get<std::string>();
      std::lock_guard lock(s->mutex);
      if (value == "unlabeled" || value == "none") {
        s->labels.erase(ref);
      } else {
        const auto label = parse_label(value);
        if (!label) throw HttpError{400, "invalid-params", "label must be positive, negative or unlabeled"};
        s->labels[ref] = *label;
      }
      persist(*s);
      bool stale = false;
      {
        std::lock_guard catalog_lock(catalog_mutex);
        stale = !catalog.contains(ref);
      }
      send_json(res, 200, json{{"episode_ref", ref}, {"label", value}, {"labels", s->labels.size()},
                               {"stale", stale}}.dump());
    }));

    http.Put(R"(/api/sessions/([^/]+)/view_state)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req.matches[1]);
               auto body = parse_body(req);
               std::lock_guard lock(s->mutex);
               s->view_state = std::move(body);
               persist(*s);
               send_json(res, 200, json{{"view_state", s->view_state}}.dump());
             }));

    http.Post(R"(/api/sessions/([^/]+)/models/combined)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = session(req.matches[1]);
                const auto body = parse_body(req);
                const auto members = body.value("members", std::vector<std::string>{});
                const auto mode = parse_combine_mode(body.value("mode", std::string("and")));
                if (!mode) throw HttpError{400, "invalid-params", "mode must be and/or"};
                const auto name = body.value("name", std::string("combined"));
                std::lock_guard lock(s->mutex);
                auto entry = make_composite(*s, members, *mode);
                entry.version = ++s->versions[name];
                s->models[name] = std::move(entry);
                persist(*s);
                send_json(res, 200, json{{"class_name", name}, {"version", s->versions[name]},
                                         {"members", members}, {"mode", combine_mode_name(*mode)}}.dump());
              }));

    http.Post(R"(/api/sessions/([^/]+)/models/([^/]+)/train)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = session(req.matches[1]);
                const std::string name = req.matches[2];
                const auto body = parse_body(req);
                std::unique_lock lock(s->mutex);
                auto job = prepare_training(*s, body);
                json stale = job.stale;
                if (query(req, "async").value_or("0") == "1") {
                  s->status[name] = {"running", s->versions[name], ""};
                  lock.unlock();
                  std::lock_guard jobs_lock(jobs_mutex);
                  jobs.push_back(std::async(std::launch::async, [this, s, name, job = std::move(job)] {
                    try {
                      auto model = train(job.examples, job.config, name);
                      std::lock_guard inner(s->mutex);
                      install_model(*s, name, std::move(model));
                    } catch (const std::exception& e) {
                      std::lock_guard inner(s->mutex);
                      s->status[name] = {"failed", s->versions[name], e.what()};
                    }
                  }));
                  send_json(res, 202, json{{"class_name", name}, {"state", "running"}, {"stale", stale}}.dump());
                  return;
                }
                auto model = train(job.examples, job.config, name);
                const auto version = install_model(*s, name, std::move(model));
                send_json(res, 200, json{{"class_name", name},
                                         {"version", version},
                                         {"trained_on", job.examples.size()},
                                         {"seed", job.config.rng_seed},
                                         {"stale", stale}}.dump());
              }));

    http.Get(R"(/api/sessions/([^/]+)/models/([^/]+)/status)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req.matches[1]);
               std::lock_guard lock(s->mutex);
               const std::string name = req.matches[2];
               const auto it = s->status.find(name);
               const TrainingStatus st = it == s->status.end() ? TrainingStatus{} : it->second;
               send_json(res, 200, json{{"class_name", name}, {"state", st.state},
                                        {"version", s->versions[name]}, {"error", st.error}}.dump());
             }));

    http.Get(R"(/api/sessions/([^/]+)/models/([^/]+)/predictions)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto [model, version, name] = model_for(req);
               auto scored = score_catalog(req, model);
               if (const auto min = query_number(req, "min_confidence")) {
                 const auto polarity = parse_label(query(req, "polarity").value_or("positive"));
                 if (!polarity) throw HttpError{400, "invalid-params", "polarity must be positive or negative"};
                 scored = filter_scored(scored, *min, *polarity);
               }
               json rows = json::array();
               for (const auto& r : scored) rows.push_back(r.row);
               send_json(res, 200, json{{"class_name", name}, {"version", version},
                                        {"predictions", std::move(rows)}}.dump());
             }));

    http.Get(R"(/api/sessions/([^/]+)/models/([^/]+)/uncertain)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto [model, version, name] = model_for(req);
               const auto scored = score_catalog(req, model);
               std::vector<ScoredEpisode> plain;
               std::map<std::string, const json*> rows;
               for (const auto& r : scored) {
                 plain.push_back(r.scored);
                 rows[r.scored.ref] = &r.row;
               }
               auto ranked = rank_uncertain(plain);
               if (const auto limit = query_count(req, "limit")) {
                 if (ranked.size() > *limit) ranked.resize(*limit);
               }
               json out = json::array();
               for (const auto& r : ranked) out.push_back(*rows.at(r.ref));
               send_json(res, 200, json{{"class_name", name}, {"version", version},
                                        {"uncertain", std::move(out)}}.dump());
             }));

    http.Get(R"(/api/sessions/([^/]+)/models/([^/]+))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req.matches[1]);
               std::lock_guard lock(s->mutex);
               const auto it = s->models.find(req.matches[2]);
               if (it == s->models.end()) throw HttpError{404, "unknown-class", "unknown model " + std::string(req.matches[2])};
               if (it->second.forest) return send_json(res, 200, model_to_json(*it->second.forest));
               send_json(res, 200, json{{"class_name", it->first}, {"kind", "composite"},
                                        {"mode", combine_mode_name(it->second.mode)},
                                        {"members", it->second.members},
                                        {"version", it->second.version}}.dump());
             }));
  }

  struct ModelRef {
    ModelEntry model;
    std::uint64_t version;
    std::string name;
  };

  ModelRef model_for(const httplib::Request& req) {
    auto s = session(req.matches[1]);
    std::lock_guard lock(s->mutex);
    const std::string name = req.matches[2];
    const auto it = s->models.find(name);
    if (it == s->models.end()) throw HttpError{404, "unknown-class", "unknown model " + name};
    return {it->second, it->second.version, name};
  }

  struct ScoredRow {
    ScoredEpisode scored;
    json row;
  };

  // Catalog episodes (or one pair's episodes when ?pair=a,b is given), ordered
  // by pair then start time.
  std::vector<ScoredRow> score_catalog(const httplib::Request& req, const ModelEntry& model) {
    std::vector<std::pair<std::string, CatalogEntry>> entries;
    if (const auto pair = query(req, "pair")) {
      const auto parts = text::split(*pair, ',');
      if (parts.size() != 2) throw HttpError{400, "invalid-params", "pair must be a,b"};
      const auto& c = corpus_for(req);
      auto seq = pair_for(c, std::string(parts[0]), std::string(parts[1]));
      const auto analysis = analyze_pair(std::move(seq), detection_from_query(req));
      register_episodes(c.id, analysis);
      for (const auto& e : analysis.episodes) {
        entries.push_back({e.ref, CatalogEntry{c.id, e.a, e.b, e.start, e.end, e.features}});
      }
    } else {
      std::lock_guard lock(catalog_mutex);
      entries.assign(catalog.begin(), catalog.end());
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto& l, const auto& r) {
      const auto lk = PairKey::of(l.second.a, l.second.b);
      const auto rk = PairKey::of(r.second.a, r.second.b);
      if (lk < rk) return true;
      if (rk < lk) return false;
      if (l.second.start != r.second.start) return l.second.start < r.second.start;
      return l.first < r.first;
    });
    std::vector<ScoredRow> out;
    for (const auto& [ref, e] : entries) {
      if (!e.features) continue;
      const auto p = model.predict(*e.features);
      out.push_back({{ref, e.start, p}, prediction_row(ref, e.a, e.b, e.start, e.end, p)});
    }
    return out;
  }

  static std::vector<ScoredRow> filter_scored(const std::vector<ScoredRow>& rows, double min, Label polarity) {
    std::vector<ScoredEpisode> plain;
    for (const auto& r : rows) plain.push_back(r.scored);
    const auto kept = filter_confident(plain, min, polarity);
    std::vector<ScoredRow> out;
    std::size_t k = 0;
    for (const auto& r : rows) {
      if (k < kept.size() && kept[k].ref == r.scored.ref) {
        out.push_back(r);
        ++k;
      }
    }
    return out;
  }

  ServerConfig config;
  std::vector<Corpus> corpora;
  LruCache<std::string, std::string> profile_cache;

  std::mutex catalog_mutex;
  std::map<std::string, CatalogEntry> catalog;

  std::shared_mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  std::mutex jobs_mutex;
  std::vector<std::future<void>> jobs;

  httplib::Server http;
  bool bound = false;
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() = default;

int Server::bind() {
  if (impl_->bound) return impl_->config.port;
  if (impl_->config.port == 0) {
    impl_->config.port = impl_->http.bind_to_any_port(impl_->config.host);
    if (impl_->config.port < 0) throw Error(ErrorCode::IoError, "cannot bind " + impl_->config.host);
  } else if (!impl_->http.bind_to_port(impl_->config.host, impl_->config.port)) {
    throw Error(ErrorCode::IoError, "cannot bind " + impl_->config.host + ":" +
                                        std::to_string(impl_->config.port));
  }
  impl_->bound = true;
  return impl_->config.port;
}

void Server::listen() {
  bind();
  impl_->http.listen_after_bind();
}

void Server::stop() { impl_->http.stop(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace commdyn
