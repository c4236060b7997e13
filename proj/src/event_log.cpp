#include "commdyn/event_log.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "commdyn/error.hpp"
#include "commdyn/text.hpp"

namespace commdyn {

namespace {

const std::vector<std::uint32_t> kNoEvents;

bool is_integer_token(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = (s.front() == '-') ? 1 : 0;
  if (i == s.size()) return false;
  return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view unquote(std::string_view s) {
  s = text::trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool is_comment_or_blank(std::string_view line) {
  const auto t = text::trim(line);
  return t.empty() || t.front() == '#' || t.front() == '%';
}

struct CsvColumns {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  std::size_t timestamp = 0;
  std::size_t width = 0;
};

CsvColumns parse_csv_header(std::string_view line) {
  const auto fields = text::split(line, ',');
  std::optional<std::size_t> s, r, t;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto name = lower(unquote(fields[i]));
    if (name == "sender" || name == "source" || name == "src") s = i;
    if (name == "receiver" || name == "target" || name == "dst") r = i;
    if (name == "timestamp" || name == "time" || name == "t") t = i;
  }
  if (!s || !r || !t) {
    throw Error(ErrorCode::ParseError,
                "csv header must name sender, receiver and timestamp columns");
  }
  return {*s, *r, *t, fields.size()};
}

class Parser {
 public:
  explicit Parser(const ParseOptions& options) : options_(options) {
    report_.format = options.format;
  }

  void feed_line(std::string_view line) {
    ++report_.lines_read;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_comment_or_blank(line)) {
      ++report_.comment_or_blank_lines;
      return;
    }
    if (report_.format == InputFormat::Auto) {
      report_.format = line.find(',') != std::string_view::npos ? InputFormat::CsvWithHeader
                                                                 : InputFormat::WhitespaceTriples;
    }
    if (report_.format == InputFormat::CsvWithHeader && !columns_) {
      columns_ = parse_csv_header(line);
      return;
    }

    std::string_view sender, receiver, stamp;
    if (report_.format == InputFormat::CsvWithHeader) {
      const auto fields = text::split(line, ',');
      if (fields.size() != columns_->width) {
        return skip("expected " + std::to_string(columns_->width) + " fields, got " +
                    std::to_string(fields.size()));
      }
      sender = unquote(fields[columns_->sender]);
      receiver = unquote(fields[columns_->receiver]);
      stamp = unquote(fields[columns_->timestamp]);
    } else {
      const auto fields = text::split_whitespace(line);
      if (fields.size() != 3) {
        return skip("expected 3 fields, got " + std::to_string(fields.size()));
      }
      sender = fields[0];
      receiver = fields[1];
      stamp = fields[2];
    }
    if (sender.empty() || receiver.empty()) return skip("empty entity id");
    const auto ts = text::parse_double(stamp);
    if (!ts) return skip("malformed timestamp '" + std::string(stamp) + "'");

    events_.push_back(Event{std::string(sender), std::string(receiver), *ts});
    ++report_.records;
    if (sender == receiver) ++report_.self_loops;
  }

  ParseResult finish() {
    if (report_.format == InputFormat::Auto) report_.format = InputFormat::WhitespaceTriples;
    EventLog log(std::move(events_));
    report_.entities = log.entity_count();
    report_.directed_pairs = log.directed_pair_count();
    report_.unordered_pairs = log.pair_index().size();
    std::unordered_set<std::string_view> active;
    for (const auto& [key, counts] : log.pair_index()) {
      active.insert(key.lo);
      active.insert(key.hi);
    }
    report_.active_entities = active.size();
    if (!log.empty()) {
      report_.first_timestamp = log.min_time();
      report_.last_timestamp = log.max_time();
    }
    return {std::move(log), std::move(report_)};
  }

 private:
  void skip(std::string reason) {
    if (options_.strict) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(report_.lines_read) + ": " + reason);
    }
    ++report_.skipped;
    if (report_.skipped_lines.size() < ParseReport::kMaxSkippedDetails) {
      report_.skipped_lines.push_back({report_.lines_read, std::move(reason)});
    }
  }

  ParseOptions options_;
  ParseReport report_;
  std::optional<CsvColumns> columns_;
  std::vector<Event> events_;
};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool entity_less(std::string_view lhs, std::string_view rhs) {
  // Integer ids sort before all other ids.
  const auto l = is_integer_token(lhs) ? text::parse_integer(lhs) : std::nullopt;
  const auto r = is_integer_token(rhs) ? text::parse_integer(rhs) : std::nullopt;
  if (l.has_value() != r.has_value()) return l.has_value();
  if (l.has_value()) {
    const long long lv = l.value_or(0);
    const long long rv = r.value_or(0);
    if (lv != rv) return lv < rv;
  }
  return lhs < rhs;
}

PairKey PairKey::of(const EntityId& a, const EntityId& b) {
  return entity_less(b, a) ? PairKey{b, a} : PairKey{a, b};
}

bool operator<(const PairKey& lhs, const PairKey& rhs) {
  if (lhs.lo != rhs.lo) return entity_less(lhs.lo, rhs.lo);
  if (lhs.hi != rhs.hi) return entity_less(lhs.hi, rhs.hi);
  return false;
}

std::vector<double> PairSequence::timestamps(Direction d) const {
  std::vector<double> out;
  for (const auto& e : events) {
    if (e.direction == d) out.push_back(e.timestamp);
  }
  return out;
}

std::size_t PairSequence::count(Direction d) const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [d](const SequenceEvent& e) { return e.direction == d; }));
}

EventLog::EventLog(std::vector<Event> events) : events_(std::move(events)) {
  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& l, const Event& r) { return l.timestamp < r.timestamp; });

  auto intern = [this](const EntityId& id) {
    auto [it, inserted] = entity_index_.try_emplace(id, static_cast<std::uint32_t>(entities_.size()));
    if (inserted) entities_.push_back(id);
    return it->second;
  };

  std::unordered_set<std::uint64_t> directed;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    const auto s = intern(e.sender);
    const auto r = intern(e.receiver);
    if (s == r) {
      ++self_loops_;
      continue;
    }
    directed.insert((static_cast<std::uint64_t>(s) << 32) | r);
    auto key = PairKey::of(e.sender, e.receiver);
    auto& counts = pair_counts_[key];
    if (e.sender == key.lo) {
      ++counts.lo_to_hi;
    } else {
      ++counts.hi_to_lo;
    }
    pair_events_[std::move(key)].push_back(static_cast<std::uint32_t>(i));
  }
  directed_pairs_ = directed.size();
}

std::optional<std::uint32_t> EventLog::entity_handle(const EntityId& id) const {
  const auto it = entity_index_.find(id);
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::uint32_t>& EventLog::pair_event_indices(const PairKey& key) const {
  const auto it = pair_events_.find(key);
  return it == pair_events_.end() ? kNoEvents : it->second;
}

double EventLog::min_time() const { return events_.empty() ? 0.0 : events_.front().timestamp; }
double EventLog::max_time() const { return events_.empty() ? 0.0 : events_.back().timestamp; }

ParseResult parse_events(std::istream& input, const ParseOptions& options) {
  Parser parser(options);
  std::string line;
  while (std::getline(input, line)) parser.feed_line(line);
  return parser.finish();
}

ParseResult parse_events(std::string_view text, const ParseOptions& options) {
  Parser parser(options);
  std::size_t begin = 0;
  while (begin < text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    parser.feed_line(text.substr(begin, end - begin));
    begin = end + 1;
  }
  return parser.finish();
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto name = path.string();
  if (ends_with(name, ".gz")) {
    gzFile file = gzopen(name.c_str(), "rb");
    if (file == nullptr) throw Error(ErrorCode::IoError, "cannot open " + name);
    std::string out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(file, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(file);
    if (failed) throw Error(ErrorCode::IoError, "corrupt gzip stream in " + name);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + name);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ParseResult load_events(const std::filesystem::path& path, const ParseOptions& options) {
  const auto contents = read_text_file(path);
  return parse_events(std::string_view(contents), options);
}

void write_events(std::ostream& out, const EventLog& log) {
  for (const auto& e : log.events()) {
    out << e.sender << ' ' << e.receiver << ' ' << text::format_number(e.timestamp) << '\n';
  }
}

PairSequence pair_sequence(const EventLog& log, const EntityId& a, const EntityId& b) {
  if (a == b) throw Error(ErrorCode::InvalidPair, "pair endpoints must differ: " + a);
  PairSequence seq{a, b, {}};
  const auto& indices = log.pair_event_indices(PairKey::of(a, b));
  seq.events.reserve(indices.size());
  for (const auto i : indices) {
    const auto& e = log.events()[i];
    seq.events.push_back({e.timestamp, e.sender == a ? Direction::Outgoing : Direction::Incoming});
  }
  return seq;
}

std::vector<PairSummary> list_pairs(const EventLog& log, std::size_t min_messages) {
  if (min_messages < 1) throw Error(ErrorCode::InvalidParams, "min_messages must be >= 1");
  std::vector<PairSummary> out;
  for (const auto& [key, counts] : log.pair_index()) {
    if (counts.total() >= min_messages) out.push_back({key, counts.lo_to_hi, counts.hi_to_lo});
  }
  // pair_index iterates in pair order already, so a stable sort keeps that tie order.
  std::stable_sort(out.begin(), out.end(),
                   [](const PairSummary& l, const PairSummary& r) { return l.total() > r.total(); });
  return out;
}

std::string_view format_name(InputFormat format) {
  switch (format) {
    case InputFormat::Auto: return "auto";
    case InputFormat::WhitespaceTriples: return "whitespace";
    case InputFormat::CsvWithHeader: return "csv";
  }
  return "auto";
}

void write_report_text(std::ostream& out, const ParseReport& r) {
  out << "format: " << format_name(r.format) << '\n'
      << "lines_read: " << r.lines_read << '\n'
      << "comment_or_blank_lines: " << r.comment_or_blank_lines << '\n'
      << "records: " << r.records << '\n'
      << "self_loops: " << r.self_loops << '\n'
      << "skipped: " << r.skipped << '\n'
      << "entities: " << r.entities << '\n'
      << "active_entities: " << r.active_entities << '\n'
      << "directed_pairs: " << r.directed_pairs << '\n'
      << "unordered_pairs: " << r.unordered_pairs << '\n'
      << "first_timestamp: " << text::format_number(r.first_timestamp) << '\n'
      << "last_timestamp: " << text::format_number(r.last_timestamp) << '\n'
      << "span_days: " << text::format_number(r.span_days()) << '\n';
  for (const auto& s : r.skipped_lines) out << "skipped_line " << s.line << ": " << s.reason << '\n';
}

std::string report_json(const ParseReport& r) {
  nlohmann::ordered_json j;
  j["format"] = format_name(r.format);
  j["lines_read"] = r.lines_read;
  j["comment_or_blank_lines"] = r.comment_or_blank_lines;
  j["records"] = r.records;
  j["self_loops"] = r.self_loops;
  j["skipped"] = r.skipped;
  j["entities"] = r.entities;
  j["active_entities"] = r.active_entities;
  j["directed_pairs"] = r.directed_pairs;
  j["unordered_pairs"] = r.unordered_pairs;
  j["first_timestamp"] = r.first_timestamp;
  j["last_timestamp"] = r.last_timestamp;
  j["span_days"] = r.span_days();
  auto skipped = nlohmann::ordered_json::array();
  for (const auto& s : r.skipped_lines) skipped.push_back({{"line", s.line}, {"reason", s.reason}});
  j["skipped_lines"] = std::move(skipped);
  return j.dump();
}

}  // namespace commdyn
