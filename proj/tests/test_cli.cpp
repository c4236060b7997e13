#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "commdyn/analysis.hpp"
#include "commdyn/cli.hpp"
#include "commdyn/tables.hpp"
#include "json.hpp"

using namespace commdyn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "commdyn");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("commdyn_cli_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& body) const {
    std::ofstream(path / name) << body;
    return (path / name).string();
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

const char* kTwoBursts = "1 2 0\n1 2 1\n1 2 2\n1 2 100\n1 2 101\n1 2 102\n";
const char* kMixedBursts = "1 2 0\n1 2 1\n1 2 2\n2 1 100\n1 2 101\n2 1 102\n";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("episodes on the two-burst fixture prints two rows") {
  TempDir dir;
  const auto log = dir.write("bursts.txt", kTwoBursts);
  const auto r = run({"episodes", log, "--pair", "1,2", "--h", "1", "--epsilon-mode", "relative", "--epsilon", "0.05"});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("# pair=1,2 ", 0) == 0);
  CHECK(rows[1].rfind("episode_id,", 0) == 0);
}

TEST_CASE("episodes output equals the library encoding") {
  TempDir dir;
  const auto log = dir.write("log.txt", "1 2 0\n2 1 3\n1 2 7\n3 1 2\n1 3 4\n3 1 90\n1 3 100\n");
  const auto r = run({"episodes", log, "--pair", "1,2", "--pair", "3,1", "--h", "2", "--merge-gap", "1"});
  REQUIRE(r.code == 0);

  const auto events = load_events(log).log;
  DetectionParams p;
  p.h = 2;
  p.merge_gap = 1;
  std::vector<PairAnalysis> analyses;
  analyses.push_back(analyze_pair(pair_sequence(events, "1", "2"), p));
  analyses.push_back(analyze_pair(pair_sequence(events, "3", "1"), p));
  std::ostringstream csv;
  write_episodes_csv(csv, analyses);
  CHECK(r.out == csv.str());

  const auto j = run({"episodes", log, "--pair", "1,2", "--pair", "3,1", "--h", "2", "--merge-gap", "1", "--format", "json"});
  REQUIRE(j.code == 0);
  CHECK(j.out == episodes_json(analyses) + "\n");
  const auto a = read_feature_csv(r.out), b = read_feature_json(j.out);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].episode_id == b[i].episode_id);
    CHECK(a[i].features == b[i].features);
  }
}

TEST_CASE("profile output integrates to the event count") {
  TempDir dir;
  const auto log = dir.write("log.txt", "1 2 0\n2 1 3\n1 2 7\n2 1 8\n1 2 30\n");
  const auto r = run({"profile", log, "--pair", "1,2", "--h", "1"});
  REQUIRE(r.code == 0);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() > 3);
  CHECK(rows[1] == "t,f_in,f_out");
  double area = 0, prev_t = 0, prev_g = 0;
  for (std::size_t i = 2; i < rows.size(); ++i) {
    std::istringstream cells(rows[i]);
    std::string t, fin, fout;
    std::getline(cells, t, ',');
    std::getline(cells, fin, ',');
    std::getline(cells, fout, ',');
    const double g = 2 * std::stod(fin) + 3 * std::stod(fout);
    if (i > 2) area += 0.5 * (g + prev_g) * (std::stod(t) - prev_t);
    prev_t = std::stod(t);
    prev_g = g;
  }
  CHECK(std::abs(area - 5.0) < 1e-3);

  const auto j = run({"profile", log, "--pair", "1,2", "--h", "1", "--format", "json"});
  REQUIRE(j.code == 0);
  const auto doc = nlohmann::json::parse(j.out);
  CHECK(doc["n_in"] == 2);
  CHECK(doc["n_out"] == 3);
}

TEST_CASE("train with a single class fails with a data error") {
  TempDir dir;
  const auto log = dir.write("bursts.txt", kTwoBursts);
  const auto eps = run({"episodes", log, "--pair", "1,2", "--h", "1", "--out", dir.file("eps.csv")});
  REQUIRE(eps.code == 0);
  const auto rows = read_feature_csv(read(dir.file("eps.csv")));
  REQUIRE(rows.size() == 2);
  const auto labels = dir.write("labels.csv", "episode_id,label\n" + rows[0].episode_id + ",positive\n" +
                                                  rows[1].episode_id + ",positive\n");
  const auto r = run({"train", "--features", dir.file("eps.csv"), "--labels", labels, "--out", dir.file("m.json")});
  CHECK(r.code == 2);
  CHECK(r.err.find("needs-both-classes") != std::string::npos);
}

TEST_CASE("train and predict through files") {
  TempDir dir;
  const auto log = dir.write("bursts.txt", kMixedBursts);
  REQUIRE(run({"episodes", log, "--pair", "1,2", "--h", "1", "--out", dir.file("eps.csv")}).code == 0);
  const auto rows = read_feature_csv(read(dir.file("eps.csv")));
  REQUIRE(rows.size() == 2);
  const auto labels = dir.write("labels.csv", "episode_id,label\n" + rows[0].episode_id + ",positive\n" +
                                                  rows[1].episode_id + ",negative\nstale,positive\n");
  const auto t = run({"train", "--features", dir.file("eps.csv"), "--labels", labels, "--out",
                      dir.file("m.json"), "--seed", "5", "--trees", "11"});
  REQUIRE(t.code == 0);
  CHECK(t.err.find("1 labeled episode(s) not found") != std::string::npos);
  const auto model = model_from_json(read(dir.file("m.json")));
  CHECK(model.trees.size() == 11);
  CHECK(model.config.rng_seed == 5);

  const auto p = run({"predict", "--model", dir.file("m.json"), "--features", dir.file("eps.csv")});
  REQUIRE(p.code == 0);
  const auto out = lines(p.out);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == "episode_id,label,confidence");
  CHECK(out[1] == rows[0].episode_id + ",positive,1");
  CHECK(out[2] == rows[1].episode_id + ",negative,0");
}

TEST_CASE("ingest reports") {
  TempDir dir;
  const auto log = dir.write("log.txt", "1 2 0\n1 1 5\nbad line\n2 1 86400\n");
  const auto r = run({"ingest", log, "--json"});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc["records"] == 3);
  CHECK(doc["self_loops"] == 1);
  CHECK(doc["skipped"] == 1);
  CHECK(r.err.empty());
  const auto text = run({"ingest", log, "--report"});
  CHECK(text.code == 0);
  CHECK(text.err.find("records: 3") != std::string::npos);
  const auto strict = run({"ingest", log, "--strict"});
  CHECK(strict.code == 2);
  CHECK(strict.err.find("line 3") != std::string::npos);
}

TEST_CASE("pairs table") {
  TempDir dir;
  const auto log = dir.write("log.txt", "1 2 0\n1 2 1\n2 1 2\n3 1 5\n");
  CHECK(run({"pairs", log, "--min", "2"}).out == "a,b,count_ab,count_ba,total\n1,2,2,1,3\n");
  const auto j = nlohmann::json::parse(run({"pairs", log, "--format", "json"}).out);
  CHECK(j.size() == 2);
  CHECK(run({"pairs", log, "--min", "0"}).code == 1);
}

TEST_CASE("usage and data errors have distinct exit codes") {
  TempDir dir;
  const auto log = dir.write("log.txt", kTwoBursts);
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"episodes", log}).code == 1);
  CHECK(run({"episodes", log, "--pair", "1"}).code == 1);
  CHECK(run({"episodes", log, "--pair", "1,2", "--epsilon-mode", "peak"}).code == 1);
  CHECK(run({"episodes", log, "--pair", "1,2", "--h", "-1"}).code == 1);
  CHECK(run({"episodes", log, "--pair", "1,2", "--format", "xml"}).code == 1);
  CHECK(run({"episodes", log, "--pair", "1,1"}).code == 2);
  CHECK(run({"episodes", dir.file("missing.txt"), "--pair", "1,2"}).code == 2);
  CHECK(run({"predict", "--model", dir.file("missing.json"), "--features", log}).code == 2);
}

TEST_CASE("help lists defaults") {
  const auto r = run({"episodes", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("2048") != std::string::npos);
  CHECK(r.out.find("0.05") != std::string::npos);
  CHECK(r.out.find("medium") != std::string::npos);
  CHECK(run({"train", "--help"}).out.find("100") != std::string::npos);
}

}
