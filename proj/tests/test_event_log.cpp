#include <sstream>
#include <filesystem>
#include <fstream>
#include <random>

#include <zlib.h>

#include "doctest.h"
#include "commdyn/error.hpp"
#include "commdyn/event_log.hpp"
#include "oracles.hpp"

using namespace commdyn;

namespace {

EventLog log_of(std::string_view text) { return parse_events(text).log; }

std::vector<std::pair<double, Direction>> as_pairs(const PairSequence& s) {
  std::vector<std::pair<double, Direction>> out;
  for (const auto& e : s.events) out.emplace_back(e.timestamp, e.direction);
  return out;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("two records round trip into pair counts") {
  const auto log = log_of("1 2 100\n2 1 160\n");
  REQUIRE(log.size() == 2);
  const auto& idx = log.pair_index();
  REQUIRE(idx.size() == 1);
  const auto& [key, counts] = *idx.begin();
  CHECK(key == PairKey{"1", "2"});
  CHECK(counts.lo_to_hi == 1);
  CHECK(counts.hi_to_lo == 1);
}

TEST_CASE("empty input is an empty log") {
  const auto r = parse_events(std::string_view{});
  CHECK(r.log.empty());
  CHECK(r.report.records == 0);
  CHECK(r.report.skipped == 0);
}

TEST_CASE("events are sorted with ties kept in input order") {
  const auto log = log_of("3 4 10\n1 2 5\n5 6 10\n7 8 10\n");
  REQUIRE(log.size() == 4);
  CHECK(log.events()[0].sender == "1");
  CHECK(log.events()[1].sender == "3");
  CHECK(log.events()[2].sender == "5");
  CHECK(log.events()[3].sender == "7");
}

TEST_CASE("malformed records are skipped and reported") {
  const auto r = parse_events("1 2 100\n1 2\n1 2 abc\n# comment\n\n2 1 nan\n2 1 7.5\n");
  CHECK(r.report.records == 2);
  CHECK(r.report.skipped == 3);
  REQUIRE(r.report.skipped_lines.size() == 3);
  CHECK(r.report.skipped_lines[0].line == 2);
  CHECK(r.report.skipped_lines[1].line == 3);
  CHECK(r.report.skipped_lines[2].line == 6);
  CHECK(r.report.comment_or_blank_lines == 2);
  CHECK(r.log.events()[0].timestamp == 7.5);
}

TEST_CASE("strict mode aborts at the first malformed record with its line number") {
  ParseOptions opts;
  opts.strict = true;
  try {
    parse_events("1 2 100\n\n1 2 x\n", opts);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("self loops are kept in the log but not in pair sequences") {
  const auto r = parse_events("1 1 5\n1 2 6\n");
  CHECK(r.report.self_loops == 1);
  CHECK(r.log.size() == 2);
  CHECK(r.log.self_loop_count() == 1);
  CHECK(pair_sequence(r.log, "1", "2").events.size() == 1);
}

TEST_CASE("csv with header in any column order") {
  const auto r = parse_events("timestamp,receiver,sender\n100,b,a\n160,a,b\n");
  CHECK(r.report.format == InputFormat::CsvWithHeader);
  REQUIRE(r.log.size() == 2);
  CHECK(r.log.events()[0] == Event{"a", "b", 100.0});
  CHECK(r.log.events()[1] == Event{"b", "a", 160.0});
}

TEST_CASE("crlf line endings and tabs") {
  const auto log = log_of("1\t2\t100\r\n2 1  160\r\n");
  REQUIRE(log.size() == 2);
  CHECK(log.events()[1].timestamp == 160.0);
}

TEST_CASE("pair sequence orientation") {
  const auto log = log_of("1 2 100\n2 1 160\n");
  using D = Direction;
  CHECK(as_pairs(pair_sequence(log, "1", "2")) ==
        std::vector<std::pair<double, D>>{{100, D::Outgoing}, {160, D::Incoming}});
  CHECK(as_pairs(pair_sequence(log, "2", "1")) ==
        std::vector<std::pair<double, D>>{{100, D::Incoming}, {160, D::Outgoing}});
}

TEST_CASE("pair sequence for an unconnected pair is empty") {
  const auto log = log_of("3 4 1\n4 3 2\n");
  CHECK(pair_sequence(log, "1", "2").empty());
}

TEST_CASE("pair sequence rejects a == b") {
  const auto log = log_of("1 2 1\n");
  try {
    pair_sequence(log, "1", "1");
    FAIL("expected invalid-pair");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidPair);
  }
}

TEST_CASE("list_pairs filters and orders by total") {
  const auto log = log_of("1 2 0\n1 2 1\n2 1 2\n3 1 5\n");
  const auto two = list_pairs(log, 2);
  REQUIRE(two.size() == 1);
  CHECK(two[0].pair == PairKey{"1", "2"});
  CHECK(two[0].count_ab == 2);
  CHECK(two[0].count_ba == 1);

  const auto one = list_pairs(log, 1);
  REQUIRE(one.size() == 2);
  CHECK(one[1].pair == PairKey{"1", "3"});
  CHECK(one[1].count_ab == 0);
  CHECK(one[1].count_ba == 1);

  CHECK(list_pairs(EventLog{}, 1).empty());
  CHECK_THROWS_AS(list_pairs(log, 0), Error);
}

TEST_CASE("list_pairs breaks count ties by pair id") {
  const auto log = log_of("10 11 0\n2 3 1\n2 10 2\n");
  const auto rows = list_pairs(log, 1);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].pair == PairKey{"2", "3"});
  CHECK(rows[1].pair == PairKey{"2", "10"});
  CHECK(rows[2].pair == PairKey{"10", "11"});
}

TEST_CASE("entity ordering is numeric for integers") {
  CHECK(entity_less("2", "10"));
  CHECK_FALSE(entity_less("10", "2"));
  CHECK(entity_less("10", "a"));
  CHECK(entity_less("a", "b"));
  CHECK_FALSE(entity_less("a", "a"));
}

TEST_CASE("report counts corpus shape") {
  const auto r = parse_events("1 2 0\n2 1 86400\n3 3 172800\n1 4 172800\n");
  CHECK(r.report.records == 4);
  CHECK(r.report.entities == 4);
  CHECK(r.report.active_entities == 3);
  CHECK(r.report.directed_pairs == 3);
  CHECK(r.report.unordered_pairs == 2);
  CHECK(r.report.span_days() == 2.0);
}

TEST_CASE("gzip input is decompressed") {
  const auto path = std::filesystem::temp_directory_path() / "commdyn_ingest_test.txt.gz";
  const std::string body = "1 2 100\n2 1 160\n";
  gzFile f = gzopen(path.string().c_str(), "wb");
  REQUIRE(f != nullptr);
  gzwrite(f, body.data(), static_cast<unsigned>(body.size()));
  gzclose(f);
  const auto r = load_events(path);
  std::filesystem::remove(path);
  CHECK(r.log.size() == 2);
}

TEST_CASE("missing file is an io error") {
  CHECK_THROWS_AS(load_events("/nonexistent/commdyn/file.txt"), Error);
}

TEST_CASE("property: write then parse reproduces the event sequence") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ent(0, 9);
  std::uniform_real_distribution<double> ts(-1e6, 1e9);
  for (int round = 0; round < 50; ++round) {
    std::vector<Event> events;
    for (int i = 0; i < 100; ++i) {
      events.push_back({std::to_string(ent(rng)), "e" + std::to_string(ent(rng)), ts(rng)});
    }
    const EventLog log(events);
    std::ostringstream out;
    write_events(out, log);
    const auto back = parse_events(out.str()).log;
    CHECK(back.events() == log.events());
  }
}

TEST_CASE("property: pair counts plus self loops cover every event") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ent(0, 6);
  for (int round = 0; round < 50; ++round) {
    std::vector<Event> events;
    for (int i = 0; i < 80; ++i) {
      events.push_back({std::to_string(ent(rng)), std::to_string(ent(rng)), double(i % 13)});
    }
    const EventLog log(events);
    std::size_t total = log.self_loop_count();
    for (const auto& [k, c] : log.pair_index()) total += c.total();
    CHECK(total == log.size());
  }
}

TEST_CASE("property: swapping a and b flips every direction") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> ent(0, 3);
  std::uniform_real_distribution<double> ts(0, 1000);
  std::vector<Event> events;
  for (int i = 0; i < 300; ++i) events.push_back({std::to_string(ent(rng)), std::to_string(ent(rng)), ts(rng)});
  const EventLog log(events);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      const auto ab = pair_sequence(log, std::to_string(a), std::to_string(b));
      const auto ba = pair_sequence(log, std::to_string(b), std::to_string(a));
      CHECK(ab.events == oracle::flipped(ba).events);
    }
  }
}

}
