#include "commdyn/tables.hpp"

#include <algorithm>
#include <optional>

#include "json.hpp"

#include "commdyn/error.hpp"
#include "commdyn/text.hpp"

namespace commdyn {

namespace {

using json = nlohmann::ordered_json;
using text::format_number;

std::vector<std::string_view> data_lines(std::string_view content) {
  std::vector<std::string_view> out;
  for (auto line : text::split(content, '\n')) {
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    out.push_back(line);
  }
  return out;
}

std::size_t count_in(const PairSequence& seq, const Episode& e, Direction d) {
  return static_cast<std::size_t>(std::count_if(
      e.event_indices.begin(), e.event_indices.end(),
      [&](std::size_t i) { return seq.events[i].direction == d; }));
}

json params_json(const PairAnalysis& a) {
  const auto& p = a.params;
  json j;
  j["pair"] = {a.seq.a, a.seq.b};
  j["mu"] = p.kde.mu;
  j["sigma"] = p.kde.sigma;
  j["h"] = p.kde.h;
  j["zoom_level"] = p.zoom_level;
  j["epsilon_mode"] = epsilon_mode_name(p.epsilon.mode);
  j["epsilon"] = p.epsilon.value;
  j["epsilon_abs"] = p.epsilon_abs;
  j["min_duration"] = p.min_duration;
  j["merge_gap"] = p.merge_gap;
  j["grid"] = {{"start", p.grid.start}, {"step", p.grid.step}, {"n", p.grid.n}};
  j["events"] = a.seq.events.size();
  j["residual"] = a.residual.size();
  return j;
}

}  // namespace

void write_episodes_csv(std::ostream& out, std::span<const PairAnalysis> analyses) {
  for (const auto& a : analyses) {
    const auto& p = a.params;
    out << "# pair=" << a.seq.a << ',' << a.seq.b << " mu=" << format_number(p.kde.mu)
        << " sigma=" << format_number(p.kde.sigma) << " h=" << format_number(p.kde.h)
        << " zoom_level=" << p.zoom_level << " epsilon_mode=" << epsilon_mode_name(p.epsilon.mode)
        << " epsilon=" << format_number(p.epsilon.value)
        << " epsilon_abs=" << format_number(p.epsilon_abs)
        << " min_duration=" << format_number(p.min_duration)
        << " merge_gap=" << format_number(p.merge_gap)
        << " grid_start=" << format_number(p.grid.start)
        << " grid_step=" << format_number(p.grid.step) << " grid_n=" << p.grid.n
        << " events=" << a.seq.events.size() << " residual=" << a.residual.size() << '\n';
  }
  out << "episode_id,a,b,start,end,n_in,n_out";
  for (const auto name : kFeatureNames) out << ',' << name;
  out << '\n';
  for (const auto& a : analyses) {
    for (const auto& e : a.episodes) {
      out << e.ref << ',' << e.a << ',' << e.b << ',' << format_number(e.start) << ','
          << format_number(e.end) << ',' << count_in(a.seq, e, Direction::Incoming) << ','
          << count_in(a.seq, e, Direction::Outgoing);
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        out << ',';
        if (e.features) out << format_number((*e.features)[i]);
      }
      out << '\n';
    }
  }
}

std::string episodes_json(std::span<const PairAnalysis> analyses) {
  json j;
  auto meta = json::array();
  auto episodes = json::array();
  for (const auto& a : analyses) {
    meta.push_back(params_json(a));
    for (const auto& e : a.episodes) {
      json row;
      row["episode_id"] = e.ref;
      row["pair"] = {e.a, e.b};
      row["start"] = e.start;
      row["end"] = e.end;
      row["n_in"] = count_in(a.seq, e, Direction::Incoming);
      row["n_out"] = count_in(a.seq, e, Direction::Outgoing);
      if (e.features) {
        json f;
        for (std::size_t i = 0; i < kFeatureCount; ++i) f[std::string(kFeatureNames[i])] = (*e.features)[i];
        row["features"] = std::move(f);
      } else {
        row["features"] = nullptr;
      }
      episodes.push_back(std::move(row));
    }
  }
  j["meta"] = std::move(meta);
  j["episodes"] = std::move(episodes);
  return j.dump();
}

std::vector<FeatureRow> read_feature_csv(std::string_view content) {
  const auto lines = data_lines(content);
  if (lines.empty()) return {};
  const auto header = text::split(lines.front(), ',');
  std::optional<std::size_t> id_col;
  std::array<std::optional<std::size_t>, kFeatureCount> cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = text::trim(header[i]);
    if (name == "episode_id") id_col = i;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (name == kFeatureNames[f]) cols[f] = i;
    }
  }
  if (!id_col) throw Error(ErrorCode::ParseError, "feature table lacks an episode_id column");
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (!cols[f]) {
      throw Error(ErrorCode::ParseError,
                  "feature table lacks column " + std::string(kFeatureNames[f]));
    }
  }

  std::vector<FeatureRow> rows;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto fields = text::split(lines[n], ',');
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "feature table row " + std::to_string(n) + " has " +
                                             std::to_string(fields.size()) + " fields");
    }
    FeatureRow row{std::string(text::trim(fields[*id_col])), {}};
    bool complete = true;
    for (std::size_t f = 0; f < kFeatureCount && complete; ++f) {
      const auto cell = text::trim(fields[*cols[f]]);
      if (cell.empty()) {
        complete = false;
        break;
      }
      const auto v = text::parse_double(cell);
      if (!v) {
        throw Error(ErrorCode::ParseError, "feature table row " + std::to_string(n) +
                                               ": bad number '" + std::string(cell) + "'");
      }
      row.features[f] = *v;
    }
    if (complete) rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<FeatureRow> read_feature_json(std::string_view content) {
  std::vector<FeatureRow> rows;
  try {
    const auto j = json::parse(content);
    for (const auto& e : j.at("episodes")) {
      if (e.at("features").is_null()) continue;
      FeatureRow row{e.at("episode_id").get<std::string>(), {}};
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        row.features[f] = e.at("features").at(std::string(kFeatureNames[f])).get<double>();
      }
      rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed episodes json: ") + e.what());
  }
  return rows;
}

std::map<std::string, Label> read_labels_csv(std::string_view content) {
  const auto lines = data_lines(content);
  std::map<std::string, Label> labels;
  if (lines.empty()) return labels;
  const auto header = text::split(lines.front(), ',');
  std::optional<std::size_t> id_col, label_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = text::trim(header[i]);
    if (name == "episode_id") id_col = i;
    if (name == "label") label_col = i;
  }
  if (!id_col || !label_col) {
    throw Error(ErrorCode::ParseError, "labels file needs episode_id and label columns");
  }
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto fields = text::split(lines[n], ',');
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "labels row " + std::to_string(n) + " has wrong field count");
    }
    const auto value = text::trim(fields[*label_col]);
    const auto label = parse_label(value);
    if (!label) {
      throw Error(ErrorCode::ParseError, "labels row " + std::to_string(n) + ": unknown label '" +
                                             std::string(value) + "'");
    }
    labels[std::string(text::trim(fields[*id_col]))] = *label;
  }
  return labels;
}

void write_labels_csv(std::ostream& out, const std::map<std::string, Label>& labels) {
  out << "episode_id,label\n";
  for (const auto& [id, label] : labels) out << id << ',' << label_name(label) << '\n';
}

void write_predictions_csv(std::ostream& out, std::span<const ScoredEpisode> predictions) {
  out << "episode_id,label,confidence\n";
  for (const auto& p : predictions) {
    out << p.ref << ',' << label_name(p.prediction.label) << ','
        << format_number(p.prediction.confidence) << '\n';
  }
}

void write_pairs_csv(std::ostream& out, std::span<const PairSummary> pairs) {
  out << "a,b,count_ab,count_ba,total\n";
  for (const auto& p : pairs) {
    out << p.pair.lo << ',' << p.pair.hi << ',' << p.count_ab << ',' << p.count_ba << ','
        << p.total() << '\n';
  }
}

}  // namespace commdyn
