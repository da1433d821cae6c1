#pragma once

// Race-result ingest: CSV parsing, non-finisher filtering, competitor
// indexing and construction of per-race rankings.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "f1rank/error.hpp"

namespace f1rank {

struct RaceRecord {
  int season = 0;
  int round = 0;
  std::string driver_id;
  std::string constructor_id;
  std::optional<int> finish_position;
  std::string status;
  int laps = 0;
  bool wet_race = false;
  bool permanent_circuit = true;
  std::size_t source_row = 0;  // 1-based data row in the input file
};

struct Dataset {
  std::vector<RaceRecord> rows;
};

/// Header names for each field. Season bounds are inclusive.
struct ColumnSchema {
  std::string season = "season";
  std::string round = "round";
  std::string driver = "driver_id";
  std::string constructor = "constructor_id";
  std::string position = "position";
  std::string status = "status";
  std::string laps = "laps";
  std::string wet = "wet";
  std::string circuit = "circuit_type";
  std::optional<int> first_season;
  std::optional<int> last_season;
};

enum class FilterRegime { all_ranked, drop_car_failures, drop_driver_failures, finishers_only };

enum class StatusClass { finished, driver_failure, car_failure };

inline std::string_view to_string(FilterRegime regime) {
  switch (regime) {
    case FilterRegime::all_ranked: return "all";
    case FilterRegime::drop_car_failures: return "no-car";
    case FilterRegime::drop_driver_failures: return "no-driver";
    case FilterRegime::finishers_only: return "finishers";
  }
  return "finishers";
}

inline FilterRegime parse_filter_regime(std::string_view text) {
  if (text == "all" || text == "all-ranked") return FilterRegime::all_ranked;
  if (text == "no-car" || text == "drop-car-failures") return FilterRegime::drop_car_failures;
  if (text == "no-driver" || text == "drop-driver-failures") return FilterRegime::drop_driver_failures;
  if (text == "finishers" || text == "finishers-only") return FilterRegime::finishers_only;
  throw ConfigError("unknown filter regime '" + std::string(text) +
                    "' (expected all, no-car, no-driver or finishers)");
}

// Non-finish causes, split into the driver-caused and car-caused lists.
inline constexpr std::array<std::string_view, 9> kDriverRelatedStatuses = {
    "Collision", "Disqualified", "Withdrew",    "Retired", "Accident",
    "Collision damage", "Spun off", "Excluded", "Illness"};

inline constexpr std::array<std::string_view, 42> kCarRelatedStatuses = {
    "ERS",          "Oil pressure",  "Engine",       "Technical",   "Gearbox",
    "Electrical",   "Power Unit",    "Brakes",       "Clutch",      "Exhaust",
    "Mechanical",   "Turbo",         "Rear wing",    "Drivetrain",  "Suspension",
    "Oil leak",     "Water leak",    "Water pressure", "Electronics", "Transmission",
    "Wheel",        "Power loss",    "Fuel system",  "Front wing",  "Tyre",
    "Throttle",     "Brake duct",    "Hydraulics",   "Battery",     "Puncture",
    "Overheating",  "Wheel nut",     "Vibrations",   "Driveshaft",  "Fuel pressure",
    "Seat",         "Spark plugs",   "Steering",     "Damage",      "Out of fuel",
    "Debris",       "Radiator"};

namespace detail {

inline bool is_lapped_finish(std::string_view status) {
  // "+1 Lap", "+12 Laps"
  if (status.size() < 5 || status.front() != '+') return false;
  std::size_t i = 1;
  while (i < status.size() && status[i] >= '0' && status[i] <= '9') ++i;
  if (i == 1) return false;
  auto rest = status.substr(i);
  return rest == " Lap" || rest == " Laps";
}

inline std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

/// Splits one CSV line; double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line, char delimiter = ',') {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(trim(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(trim(field));
  return fields;
}

inline std::optional<int> parse_int(std::string_view text) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

inline bool is_non_finish_marker(std::string_view text) {
  static constexpr std::array<std::string_view, 10> markers = {
      "", "\\N", "NA", "R", "D", "W", "N", "E", "F", "DNF"};
  return std::find(markers.begin(), markers.end(), text) != markers.end();
}

inline void check_identifier(const std::string& id, const char* what, std::size_t row) {
  if (id.empty()) {
    throw DataError("row " + std::to_string(row) + ": empty " + what);
  }
  if (id.find_first_of(",[]:") != std::string::npos) {
    throw DataError("row " + std::to_string(row) + ": " + what + " '" + id +
                    "' contains one of the reserved characters , [ ] :");
  }
}

}  // namespace detail

/// Classifies a result status. Statuses on neither non-finish list count as
/// finishes when the row carries a classified position.
inline StatusClass classify_status(std::string_view status, bool has_position) {
  if (status == "Finished" || detail::is_lapped_finish(status)) return StatusClass::finished;
  if (std::find(kDriverRelatedStatuses.begin(), kDriverRelatedStatuses.end(), status) !=
      kDriverRelatedStatuses.end())
    return StatusClass::driver_failure;
  if (std::find(kCarRelatedStatuses.begin(), kCarRelatedStatuses.end(), status) !=
      kCarRelatedStatuses.end())
    return StatusClass::car_failure;
  if (has_position) return StatusClass::finished;
  throw DataError("unclassified status '" + std::string(status) + "'");
}

inline Dataset parse_results(std::istream& in, const ColumnSchema& schema = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset: no header row");
  auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_season = column(schema.season), c_round = column(schema.round),
                    c_driver = column(schema.driver), c_team = column(schema.constructor),
                    c_pos = column(schema.position), c_status = column(schema.status),
                    c_laps = column(schema.laps), c_wet = column(schema.wet),
                    c_circuit = column(schema.circuit);

  Dataset data;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    auto integer = [&](std::size_t c, const char* what) {
      auto v = detail::parse_int(fields[c]);
      if (!v) {
        throw DataError("row " + std::to_string(row) + ": cannot parse " + what + " '" +
                        fields[c] + "'");
      }
      return *v;
    };
    RaceRecord r;
    r.source_row = row;
    r.season = integer(c_season, "season");
    r.round = integer(c_round, "round");
    r.driver_id = fields[c_driver];
    r.constructor_id = fields[c_team];
    detail::check_identifier(r.driver_id, "driver id", row);
    detail::check_identifier(r.constructor_id, "constructor id", row);
    if (!detail::is_non_finish_marker(fields[c_pos])) {
      r.finish_position = integer(c_pos, "position");
      if (*r.finish_position < 1) {
        throw DataError("row " + std::to_string(row) + ": non-positive position");
      }
    }
    r.status = fields[c_status];
    r.laps = fields[c_laps].empty() || fields[c_laps] == "\\N" ? 0 : integer(c_laps, "laps");
    const auto& wet = fields[c_wet];
    if (wet == "1" || wet == "true" || wet == "TRUE") {
      r.wet_race = true;
    } else if (wet == "0" || wet == "false" || wet == "FALSE") {
      r.wet_race = false;
    } else {
      throw DataError("row " + std::to_string(row) + ": wet must be 0 or 1, found '" + wet + "'");
    }
    const auto& circuit = fields[c_circuit];
    if (circuit == "permanent") {
      r.permanent_circuit = true;
    } else if (circuit == "street") {
      r.permanent_circuit = false;
    } else {
      throw DataError("row " + std::to_string(row) +
                      ": circuit_type must be street or permanent, found '" + circuit + "'");
    }
    if (schema.first_season && r.season < *schema.first_season) continue;
    if (schema.last_season && r.season > *schema.last_season) continue;
    data.rows.push_back(std::move(r));
  }
  if (data.rows.empty()) throw DataError("empty dataset");
  return data;
}

inline Dataset parse_results(const std::string& path, const ColumnSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return parse_results(in, schema);
}

struct DatasetCounts {
  std::size_t rows = 0;
  std::size_t races = 0;
  std::size_t drivers = 0;
  std::size_t constructors = 0;
};

inline DatasetCounts count(const Dataset& data) {
  std::set<std::pair<int, int>> races;
  std::set<std::string> drivers, teams;
  for (const auto& r : data.rows) {
    races.emplace(r.season, r.round);
    drivers.insert(r.driver_id);
    teams.insert(r.constructor_id);
  }
  return {data.rows.size(), races.size(), drivers.size(), teams.size()};
}

/// Drops rows according to the non-finisher regime. Every status must be
/// classifiable; unknown statuses are reported together.
inline Dataset apply_filter(const Dataset& data, FilterRegime regime) {
  std::set<std::string> unknown;
  std::vector<StatusClass> classes;
  classes.reserve(data.rows.size());
  for (const auto& r : data.rows) {
    try {
      classes.push_back(classify_status(r.status, r.finish_position.has_value()));
    } catch (const DataError&) {
      unknown.insert(r.status);
      classes.push_back(StatusClass::finished);
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& s : unknown) list += (list.empty() ? "'" : ", '") + s + "'";
    throw DataError("unclassified status values: " + list);
  }
  Dataset out;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    bool keep = true;
    switch (regime) {
      case FilterRegime::all_ranked: break;
      case FilterRegime::drop_car_failures: keep = classes[i] != StatusClass::car_failure; break;
      case FilterRegime::drop_driver_failures:
        keep = classes[i] != StatusClass::driver_failure;
        break;
      case FilterRegime::finishers_only: keep = classes[i] == StatusClass::finished; break;
    }
    if (keep) out.rows.push_back(data.rows[i]);
  }
  return out;
}

/// Dense integer indices for every entity in a dataset. Drivers and
/// constructors are sorted by id, seasons ascending, and the driver-season /
/// constructor-season pairs by (id, year).
class CompetitorIndex {
 public:
  struct SeasonPair {
    std::size_t entity;  // driver or constructor index
    std::size_t season;  // season index
  };

  CompetitorIndex() = default;

  CompetitorIndex(std::vector<std::string> drivers, std::vector<std::string> constructors,
                  std::vector<int> seasons, std::vector<SeasonPair> driver_seasons,
                  std::vector<SeasonPair> constructor_seasons)
      : drivers_(std::move(drivers)),
        constructors_(std::move(constructors)),
        seasons_(std::move(seasons)),
        driver_seasons_(std::move(driver_seasons)),
        constructor_seasons_(std::move(constructor_seasons)) {
    for (std::size_t i = 0; i < drivers_.size(); ++i) driver_lookup_[drivers_[i]] = i;
    for (std::size_t i = 0; i < constructors_.size(); ++i) constructor_lookup_[constructors_[i]] = i;
    for (std::size_t i = 0; i < seasons_.size(); ++i) season_lookup_[seasons_[i]] = i;
    for (std::size_t i = 0; i < driver_seasons_.size(); ++i)
      ds_lookup_[{driver_seasons_[i].entity, driver_seasons_[i].season}] = i;
    for (std::size_t i = 0; i < constructor_seasons_.size(); ++i)
      ts_lookup_[{constructor_seasons_[i].entity, constructor_seasons_[i].season}] = i;
  }

  const std::vector<std::string>& drivers() const { return drivers_; }
  const std::vector<std::string>& constructors() const { return constructors_; }
  const std::vector<int>& seasons() const { return seasons_; }
  const std::vector<SeasonPair>& driver_seasons() const { return driver_seasons_; }
  const std::vector<SeasonPair>& constructor_seasons() const { return constructor_seasons_; }

  std::optional<std::size_t> driver(const std::string& id) const { return find(driver_lookup_, id); }
  std::optional<std::size_t> constructor(const std::string& id) const {
    return find(constructor_lookup_, id);
  }
  std::optional<std::size_t> season(int year) const { return find(season_lookup_, year); }
  std::optional<std::size_t> driver_season(std::size_t d, std::size_t s) const {
    return find(ds_lookup_, std::pair{d, s});
  }
  std::optional<std::size_t> constructor_season(std::size_t t, std::size_t s) const {
    return find(ts_lookup_, std::pair{t, s});
  }

  std::string driver_season_label(std::size_t ds) const {
    const auto& p = driver_seasons_.at(ds);
    return drivers_[p.entity] + "," + std::to_string(seasons_[p.season]);
  }
  std::string constructor_season_label(std::size_t ts) const {
    const auto& p = constructor_seasons_.at(ts);
    return constructors_[p.entity] + "," + std::to_string(seasons_[p.season]);
  }

 private:
  template <class Map, class Key>
  static std::optional<std::size_t> find(const Map& map, const Key& key) {
    auto it = map.find(key);
    if (it == map.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> drivers_;
  std::vector<std::string> constructors_;
  std::vector<int> seasons_;
  std::vector<SeasonPair> driver_seasons_;
  std::vector<SeasonPair> constructor_seasons_;
  std::map<std::string, std::size_t> driver_lookup_;
  std::map<std::string, std::size_t> constructor_lookup_;
  std::map<int, std::size_t> season_lookup_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> ds_lookup_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> ts_lookup_;
};

inline CompetitorIndex build_index(const Dataset& data) {
  std::set<std::string> driver_set, team_set;
  std::set<int> season_set;
  for (const auto& r : data.rows) {
    driver_set.insert(r.driver_id);
    team_set.insert(r.constructor_id);
    season_set.insert(r.season);
  }
  std::vector<std::string> drivers(driver_set.begin(), driver_set.end());
  std::vector<std::string> teams(team_set.begin(), team_set.end());
  std::vector<int> seasons(season_set.begin(), season_set.end());
  auto position = [](const auto& sorted, const auto& value) {
    return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), value) -
                                    sorted.begin());
  };
  std::set<std::pair<std::size_t, std::size_t>> ds_set, ts_set;
  for (const auto& r : data.rows) {
    auto s = position(seasons, r.season);
    ds_set.emplace(position(drivers, r.driver_id), s);
    ts_set.emplace(position(teams, r.constructor_id), s);
  }
  std::vector<CompetitorIndex::SeasonPair> ds, ts;
  for (auto [d, s] : ds_set) ds.push_back({d, s});
  for (auto [t, s] : ts_set) ts.push_back({t, s});
  return CompetitorIndex(std::move(drivers), std::move(teams), std::move(seasons), std::move(ds),
                         std::move(ts));
}

struct Competitor {
  std::size_t driver = 0;
  std::size_t constructor = 0;
  std::size_t season = 0;
  std::size_t driver_season = 0;
  std::size_t constructor_season = 0;
  bool finished = true;
};

/// One race, competitors ordered winner-first.
struct RankOutcome {
  int season = 0;
  int round = 0;
  std::vector<Competitor> competitors;
  bool wet_race = false;
  bool permanent_circuit = true;

  std::string label() const {
    std::string r = std::to_string(round);
    if (r.size() < 2) r.insert(0, "0");
    return std::to_string(season) + "-" + r;
  }
};

/// Groups rows by race and orders them: finishers by position, then
/// non-finishers by laps completed (descending), classification order, and
/// input order. Races with fewer than two competitors are dropped and noted
/// in `warnings` when given.
inline std::vector<RankOutcome> build_outcomes(const Dataset& data, const CompetitorIndex& index,
                                               std::vector<std::string>* warnings = nullptr) {
  std::map<std::pair<int, int>, std::vector<const RaceRecord*>> races;
  for (const auto& r : data.rows) races[{r.season, r.round}].push_back(&r);

  std::vector<RankOutcome> outcomes;
  for (auto& [key, rows] : races) {
    const std::string label = std::to_string(key.first) + " round " + std::to_string(key.second);
    if (rows.size() < 2) {
      if (warnings) warnings->push_back("dropped race " + label + ": fewer than two competitors");
      continue;
    }
    std::vector<std::pair<const RaceRecord*, bool>> ranked;
    for (const auto* r : rows) {
      ranked.emplace_back(r, classify_status(r->status, r->finish_position.has_value()) ==
                                 StatusClass::finished);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second;
      const auto& ra = *a.first;
      const auto& rb = *b.first;
      if (a.second) {
        if (!ra.finish_position || !rb.finish_position) {
          return ra.finish_position.has_value() && !rb.finish_position.has_value();
        }
        return *ra.finish_position < *rb.finish_position;
      }
      if (ra.laps != rb.laps) return ra.laps > rb.laps;
      int pa = ra.finish_position.value_or(1 << 30);
      int pb = rb.finish_position.value_or(1 << 30);
      return pa < pb;
    });

    RankOutcome outcome;
    outcome.season = key.first;
    outcome.round = key.second;
    outcome.wet_race = rows.front()->wet_race;
    outcome.permanent_circuit = rows.front()->permanent_circuit;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::optional<int> previous_position;
    for (const auto& [r, finished] : ranked) {
      if (r->wet_race != outcome.wet_race || r->permanent_circuit != outcome.permanent_circuit) {
        throw DataError("race " + label + ": inconsistent wet/circuit flags across rows");
      }
      if (finished) {
        if (!r->finish_position) {
          throw DataError("race " + label + ": finisher '" + r->driver_id + "' has no position");
        }
        if (previous_position && *previous_position == *r->finish_position) {
          throw DataError("race " + label + ": tied finishing position " +
                          std::to_string(*previous_position));
        }
        previous_position = r->finish_position;
      }
      Competitor c;
      auto d = index.driver(r->driver_id);
      auto t = index.constructor(r->constructor_id);
      auto s = index.season(r->season);
      if (!d || !t || !s) {
        throw DataError("race " + label + ": competitor '" + r->driver_id + "' missing from index");
      }
      c.driver = *d;
      c.constructor = *t;
      c.season = *s;
      auto ds = index.driver_season(*d, *s);
      auto ts = index.constructor_season(*t, *s);
      if (!ds || !ts) {
        throw DataError("race " + label + ": season pairing for '" + r->driver_id +
                        "' missing from index");
      }
      c.driver_season = *ds;
      c.constructor_season = *ts;
      c.finished = finished;
      if (!seen.emplace(c.driver, c.constructor).second) {
        throw DataError("race " + label + ": duplicate entry for driver '" + r->driver_id + "'");
      }
      outcome.competitors.push_back(c);
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

struct CorpusReport {
  std::size_t races = 0;
  std::size_t entries = 0;
  std::size_t wet_races = 0;
  std::size_t street_races = 0;
  std::size_t min_competitors = 0;
  std::size_t max_competitors = 0;
  std::map<std::size_t, std::size_t> competitors_per_race;  // field size -> race count
  std::map<std::string, std::size_t> driver_entries;
  std::map<std::string, std::size_t> constructor_entries;
};

inline CorpusReport summarize_corpus(const std::vector<RankOutcome>& outcomes,
                                     const CompetitorIndex& index) {
  if (outcomes.empty()) throw DataError("empty outcome list");
  CorpusReport report;
  report.races = outcomes.size();
  report.min_competitors = outcomes.front().competitors.size();
  for (const auto& o : outcomes) {
    const auto m = o.competitors.size();
    report.entries += m;
    report.wet_races += o.wet_race ? 1 : 0;
    report.street_races += o.permanent_circuit ? 0 : 1;
    report.min_competitors = std::min(report.min_competitors, m);
    report.max_competitors = std::max(report.max_competitors, m);
    ++report.competitors_per_race[m];
    for (const auto& c : o.competitors) {
      ++report.driver_entries[index.drivers()[c.driver]];
      ++report.constructor_entries[index.constructors()[c.constructor]];
    }
  }
  return report;
}

/// Key/value rendering of a corpus report.
inline std::string format_corpus_report(const CorpusReport& r) {
  std::ostringstream out;
  out << "races=" << r.races << "\n"
      << "entries=" << r.entries << "\n"
      << "wet_races=" << r.wet_races << "\n"
      << "dry_races=" << r.races - r.wet_races << "\n"
      << "street_races=" << r.street_races << "\n"
      << "permanent_races=" << r.races - r.street_races << "\n"
      << "min_competitors=" << r.min_competitors << "\n"
      << "max_competitors=" << r.max_competitors << "\n"
      << "drivers=" << r.driver_entries.size() << "\n"
      << "constructors=" << r.constructor_entries.size() << "\n";
  for (const auto& [m, n] : r.competitors_per_race) out << "field_size[" << m << "]=" << n << "\n";
  for (const auto& [id, n] : r.driver_entries) out << "driver_entries[" << id << "]=" << n << "\n";
  for (const auto& [id, n] : r.constructor_entries)
    out << "constructor_entries[" << id << "]=" << n << "\n";
  return out.str();
}

}  // namespace f1rank
