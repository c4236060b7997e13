#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "commdyn/error.hpp"
#include "commdyn/forest.hpp"
#include "commdyn/server.hpp"

using namespace commdyn;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("commdyn_server_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Pair {1,2}: three bursts with different direction mixes. Pair {3,4}: one burst.
fs::path write_corpus(const fs::path& dir) {
  const auto path = dir / "corpus.txt";
  std::ofstream out(path);
  for (int i = 0; i < 4; ++i) out << "1 2 " << i << '\n';
  for (int i = 0; i < 4; ++i) out << (i % 2 ? "2 1 " : "1 2 ") << 100 + i << '\n';
  for (int i = 0; i < 4; ++i) out << "2 1 " << 200 + i << '\n';
  out << "3 4 50\n4 3 51\n";
  return path;
}

class Running {
 public:
  explicit Running(ServerConfig cfg) : server_(std::move(cfg)) {
    port_ = server_.bind();
    thread_ = std::thread([this] { server_.listen(); });
    server_.wait_until_ready();
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  Server server_;
  int port_ = 0;
  std::thread thread_;
};

ServerConfig config_for(const fs::path& corpus, std::optional<fs::path> sessions = std::nullopt) {
  ServerConfig cfg;
  cfg.port = 0;
  cfg.corpus_paths = {corpus};
  cfg.session_dir = sessions;
  return cfg;
}

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

std::string put_label(httplib::Client& c, const std::string& session, const std::string& ref,
                      const std::string& label) {
  const auto r = c.Put("/api/sessions/" + session + "/labels",
                       json{{"episode_ref", ref}, {"label", label}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  return r->body;
}

}  // namespace

TEST_SUITE("server") {

TEST_CASE("health, pairs and error codes") {
  const auto dir = scratch("health");
  Running srv(config_for(write_corpus(dir)));
  auto c = srv.client();

  const auto health = c.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto h = json::parse(health->body);
  CHECK(h["status"] == "ok");
  CHECK(h["corpus"]["events"] == 14);

  const auto pairs = body_of(c.Get("/api/pairs?min=3"));
  REQUIRE(pairs["pairs"].size() == 1);
  CHECK(pairs["pairs"][0]["a"] == "1");
  CHECK(pairs["pairs"][0]["total"] == 12);
  CHECK(body_of(c.Get("/api/pairs"))["pairs"].size() == 2);

  auto missing = c.Get("/api/pairs/1/9/episodes");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["error"]["code"] == "unknown-pair");
  missing = c.Get("/api/sessions/nope");
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["error"]["code"] == "unknown-session");
  const auto bad = c.Get("/api/pairs/1/2/episodes?epsilon=-1&epsilon_mode=absolute");
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"]["code"] == "invalid-params");
  CHECK(c.Options("/api/health")->status == 204);
}

TEST_CASE("read endpoints are byte-identical on repeat") {
  const auto dir = scratch("pure");
  Running srv(config_for(write_corpus(dir)));
  auto c = srv.client();
  const std::string q = "/api/pairs/1/2/profile?h=1&grid_n=300";
  const auto first = c.Get(q), second = c.Get(q);
  REQUIRE(first);
  REQUIRE(second);
  CHECK(first->body == second->body);
  CHECK(json::parse(first->body)["grid"]["n"] == 300);
  const auto e1 = c.Get("/api/pairs/1/2/episodes?h=1"), e2 = c.Get("/api/pairs/1/2/episodes?h=1");
  CHECK(e1->body == e2->body);
  CHECK(json::parse(e1->body)["episodes"].size() == 3);
}

TEST_CASE("labeling, training, predictions and uncertainty") {
  const auto dir = scratch("train");
  Running srv(config_for(write_corpus(dir)));
  auto c = srv.client();
  const auto episodes = body_of(c.Get("/api/pairs/1/2/episodes?h=1"))["episodes"];
  REQUIRE(episodes.size() == 3);
  const std::string first = episodes[0]["episode_id"], middle = episodes[1]["episode_id"],
                    last = episodes[2]["episode_id"];

  const auto session = body_of(c.Post("/api/sessions", "", "application/json"));
  CHECK(session["labels"].empty());
  const std::string id = session["id"];
  const std::string base = "/api/sessions/" + id;

  put_label(c, id, first, "positive");
  auto r = c.Post(base + "/models/relevant/train", "{}", "application/json");
  REQUIRE(r);
  CHECK(r->status == 422);
  CHECK(json::parse(r->body)["error"]["code"] == "needs-both-classes");

  put_label(c, id, last, "negative");
  const auto once = body_of(c.Get(base));
  put_label(c, id, last, "negative");
  CHECK(body_of(c.Get(base)) == once);

  r = c.Post(base + "/models/relevant/train", R"({"seed": 3})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["version"] == 1);
  r = c.Post(base + "/models/relevant/train", R"({"seed": 3})", "application/json");
  CHECK(json::parse(r->body)["version"] == 2);
  CHECK(json::parse(r->body)["trained_on"] == 2);

  const auto all = body_of(c.Get(base + "/models/relevant/predictions"))["predictions"];
  REQUIRE(all.size() == 3);
  CHECK(all[0]["episode_ref"] == first);
  CHECK(all[0]["label"] == "positive");
  CHECK(all[2]["label"] == "negative");

  std::vector<ScoredEpisode> plain;
  for (const auto& p : all) {
    plain.push_back({p["episode_ref"], p["start"], Prediction::from_confidence(p["confidence"])});
  }
  for (double min : {0.0, 0.5, 0.9, 1.0}) {
    for (const std::string pol : {"positive", "negative"}) {
      const auto got = body_of(c.Get(base + "/models/relevant/predictions?min_confidence=" + std::to_string(min) +
                                     "&polarity=" + pol))["predictions"];
      const auto want = filter_confident(plain, min, *parse_label(pol));
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i]["episode_ref"] == want[i].ref);
    }
  }

  const auto uncertain = body_of(c.Get(base + "/models/relevant/uncertain?limit=2"))["uncertain"];
  REQUIRE(uncertain.size() == 2);
  const auto ranked = rank_uncertain(plain);
  CHECK(uncertain[0]["episode_ref"] == ranked[0].ref);
  CHECK(uncertain[1]["episode_ref"] == ranked[1].ref);

  const auto model = c.Get(base + "/models/relevant");
  REQUIRE(model);
  CHECK(model_from_json(model->body).config.rng_seed == 3);

  CHECK(c.Get(base + "/models/other/predictions")->status == 404);
  CHECK(json::parse(c.Get(base + "/models/other/predictions")->body)["error"]["code"] == "unknown-class");

  const auto combined = c.Post(base + "/models/combined", R"({"members": ["relevant"], "mode": "or", "name": "either"})",
                               "application/json");
  REQUIRE(combined);
  CHECK(combined->status == 200);
  const auto either = body_of(c.Get(base + "/models/either/predictions"))["predictions"];
  CHECK(either == all);
  const auto empty = c.Post(base + "/models/combined", R"({"members": []})", "application/json");
  CHECK(empty->status == 422);
  CHECK(json::parse(empty->body)["error"]["code"] == "empty-combination");

  put_label(c, id, "0000000000000000", "positive");
  CHECK(body_of(c.Get(base))["stale_labels"] == json::array({"0000000000000000"}));
  put_label(c, id, "0000000000000000", "unlabeled");
  CHECK(body_of(c.Get(base))["stale_labels"].empty());
}

TEST_CASE("asynchronous training reports status") {
  const auto dir = scratch("async");
  Running srv(config_for(write_corpus(dir)));
  auto c = srv.client();
  const auto episodes = body_of(c.Get("/api/pairs/1/2/episodes?h=1"))["episodes"];
  const std::string id = body_of(c.Post("/api/sessions", "", "application/json"))["id"];
  put_label(c, id, episodes[0]["episode_id"], "positive");
  put_label(c, id, episodes[1]["episode_id"], "negative");
  const auto r = c.Post("/api/sessions/" + id + "/models/fast/train?async=1", "", "application/json");
  REQUIRE(r);
  CHECK(r->status == 202);
  json status;
  for (int i = 0; i < 200; ++i) {
    status = body_of(c.Get("/api/sessions/" + id + "/models/fast/status"));
    if (status["state"] == "done") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  CHECK(status["state"] == "done");
  CHECK(status["version"] == 1);
}

TEST_CASE("sessions persist across restarts") {
  const auto dir = scratch("persist");
  const auto corpus = write_corpus(dir);
  std::string id, ref;
  std::string before;
  {
    Running srv(config_for(corpus, dir / "sessions"));
    auto c = srv.client();
    const auto episodes = body_of(c.Get("/api/pairs/1/2/episodes?h=1"))["episodes"];
    id = body_of(c.Post("/api/sessions", "", "application/json"))["id"];
    put_label(c, id, episodes[0]["episode_id"], "positive");
    put_label(c, id, episodes[2]["episode_id"], "negative");
    c.Put("/api/sessions/" + id + "/view_state", R"({"zoom_level": "fine"})", "application/json");
    REQUIRE(c.Post("/api/sessions/" + id + "/models/relevant/train", "", "application/json")->status == 200);
    before = c.Get("/api/sessions/" + id + "/models/relevant")->body;
  }
  Running srv(config_for(corpus, dir / "sessions"));
  auto c = srv.client();
  const auto s = body_of(c.Get("/api/sessions/" + id));
  CHECK(s["labels"].size() == 2);
  CHECK(s["view_state"]["zoom_level"] == "fine");
  CHECK(s["models"]["relevant"]["version"] == 1);
  CHECK(s["stale_labels"].size() == 2);
  CHECK(c.Get("/api/sessions/" + id + "/models/relevant")->body == before);
  c.Get("/api/pairs/1/2/episodes?h=1");
  CHECK(body_of(c.Get("/api/sessions/" + id))["stale_labels"].empty());
}

TEST_CASE("unreadable corpus fails at startup naming the path") {
  ServerConfig cfg;
  cfg.corpus_paths = {"/nonexistent/corpus.txt"};
  try {
    Server s(cfg);
    FAIL("expected startup failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
    CHECK(std::string(e.what()).find("/nonexistent/corpus.txt") != std::string::npos);
  }
}

TEST_CASE("environment overrides") {
  setenv("COMMDYN_PORT", "9191", 1);
  setenv("COMMDYN_CORPUS", "/a.txt:/b.txt", 1);
  const auto cfg = apply_env({});
  unsetenv("COMMDYN_PORT");
  unsetenv("COMMDYN_CORPUS");
  CHECK(cfg.port == 9191);
  REQUIRE(cfg.corpus_paths.size() == 2);
  CHECK(cfg.corpus_paths[1] == "/b.txt");
}

}
