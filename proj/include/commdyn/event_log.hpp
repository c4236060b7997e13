#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace commdyn {

using EntityId = std::string;

/// One directed, timestamped communication.
struct Event {
  EntityId sender;
  EntityId receiver;
  double timestamp = 0.0;  // seconds since epoch

  bool is_self_loop() const { return sender == receiver; }
  friend bool operator==(const Event&, const Event&) = default;
};

/// Total order on entity ids: numeric when both parse as integers, otherwise
/// plain string comparison. Used to orient unordered pairs and sort tables.
bool entity_less(std::string_view lhs, std::string_view rhs);

/// Unordered pair, stored with `lo` entity_less-or-equal to `hi`.
struct PairKey {
  EntityId lo;
  EntityId hi;

  static PairKey of(const EntityId& a, const EntityId& b);
  friend bool operator==(const PairKey&, const PairKey&) = default;
};

bool operator<(const PairKey& lhs, const PairKey& rhs);

struct PairCounts {
  std::size_t lo_to_hi = 0;
  std::size_t hi_to_lo = 0;

  std::size_t total() const { return lo_to_hi + hi_to_lo; }
};

enum class Direction : std::uint8_t { Outgoing, Incoming };

inline Direction flip(Direction d) {
  return d == Direction::Outgoing ? Direction::Incoming : Direction::Outgoing;
}

struct SequenceEvent {
  double timestamp = 0.0;
  Direction direction = Direction::Outgoing;

  friend bool operator==(const SequenceEvent&, const SequenceEvent&) = default;
};

/// Direction-tagged events between `a` and `b`; outgoing always means a -> b.
struct PairSequence {
  EntityId a;
  EntityId b;
  std::vector<SequenceEvent> events;

  std::vector<double> timestamps(Direction d) const;
  std::size_t count(Direction d) const;
  bool empty() const { return events.empty(); }
};

/// One row of list_pairs. `count_ab` counts `pair.lo -> pair.hi`.
struct PairSummary {
  PairKey pair;
  std::size_t count_ab = 0;
  std::size_t count_ba = 0;

  std::size_t total() const { return count_ab + count_ba; }
};

/// Immutable, time-sorted communication log indexed by entity and pair.
class EventLog {
 public:
  EventLog() = default;

  /// Sorts `events` by timestamp (stable) and builds the indices.
  explicit EventLog(std::vector<Event> events);

  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  std::size_t entity_count() const { return entities_.size(); }
  const std::vector<EntityId>& entities() const { return entities_; }
  std::optional<std::uint32_t> entity_handle(const EntityId& id) const;

  const std::map<PairKey, PairCounts>& pair_index() const { return pair_counts_; }
  std::size_t self_loop_count() const { return self_loops_; }
  std::size_t directed_pair_count() const { return directed_pairs_; }

  /// Indices into events() of all non-self-loop events between {a, b}.
  const std::vector<std::uint32_t>& pair_event_indices(const PairKey& key) const;

  double min_time() const;
  double max_time() const;

 private:
  std::vector<Event> events_;
  std::vector<EntityId> entities_;
  std::unordered_map<EntityId, std::uint32_t> entity_index_;
  std::map<PairKey, PairCounts> pair_counts_;
  std::map<PairKey, std::vector<std::uint32_t>> pair_events_;
  std::size_t self_loops_ = 0;
  std::size_t directed_pairs_ = 0;
};

enum class InputFormat { Auto, WhitespaceTriples, CsvWithHeader };

struct ParseOptions {
  InputFormat format = InputFormat::Auto;
  /// Abort on the first malformed record instead of skipping it.
  bool strict = false;
};

struct SkippedLine {
  std::size_t line = 0;
  std::string reason;
};

struct ParseReport {
  InputFormat format = InputFormat::Auto;
  std::size_t lines_read = 0;
  std::size_t comment_or_blank_lines = 0;
  std::size_t records = 0;
  std::size_t self_loops = 0;
  std::size_t skipped = 0;
  std::vector<SkippedLine> skipped_lines;  // first kMaxSkippedDetails only

  // Corpus shape, filled from the resulting log.
  std::size_t entities = 0;
  std::size_t active_entities = 0;  // entities with at least one non-self-loop event
  std::size_t directed_pairs = 0;
  std::size_t unordered_pairs = 0;
  double first_timestamp = 0.0;
  double last_timestamp = 0.0;

  static constexpr std::size_t kMaxSkippedDetails = 100;

  double span_seconds() const { return last_timestamp - first_timestamp; }
  double span_days() const { return span_seconds() / 86400.0; }
};

struct ParseResult {
  EventLog log;
  ParseReport report;
};

ParseResult parse_events(std::istream& input, const ParseOptions& options = {});
ParseResult parse_events(std::string_view text, const ParseOptions& options = {});

/// Reads a file, transparently decompressing when the name ends in ".gz".
ParseResult load_events(const std::filesystem::path& path, const ParseOptions& options = {});

/// Reads the whole file (gzip-aware) into memory.
std::string read_text_file(const std::filesystem::path& path);

/// Writes whitespace triples that parse_events reads back unchanged.
void write_events(std::ostream& out, const EventLog& log);

PairSequence pair_sequence(const EventLog& log, const EntityId& a, const EntityId& b);

std::vector<PairSummary> list_pairs(const EventLog& log, std::size_t min_messages = 1);

void write_report_text(std::ostream& out, const ParseReport& report);
std::string report_json(const ParseReport& report);

std::string_view format_name(InputFormat format);

}  // namespace commdyn
