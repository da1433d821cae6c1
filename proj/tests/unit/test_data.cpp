#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "f1rank/data.hpp"

using namespace f1rank;

namespace {

const char* kHeader = "season,round,driver_id,constructor_id,position,status,laps,wet,circuit_type\n";

Dataset parse(const std::string& body, const ColumnSchema& schema = {}) {
  std::istringstream in(std::string(kHeader) + body);
  return parse_results(in, schema);
}

// Two seasons, three races; one mid-season constructor swap for "ocon".
const char* kSmall =
    "2020,1,hamilton,mercedes,1,Finished,58,0,permanent\n"
    "2020,1,bottas,mercedes,2,Finished,58,0,permanent\n"
    "2020,1,ocon,renault,3,+1 Lap,57,0,permanent\n"
    "2020,1,kvyat,alphatauri,,Engine,20,0,permanent\n"
    "2020,1,grosjean,haas,,Collision,3,0,permanent\n"
    "2020,2,bottas,mercedes,1,Finished,70,1,street\n"
    "2020,2,ocon,alpine,2,Finished,70,1,street\n"
    "2020,2,hamilton,mercedes,3,Finished,70,1,street\n"
    "2020,2,kvyat,alphatauri,,Gearbox,40,1,street\n"
    "2021,1,hamilton,mercedes,2,Finished,56,0,permanent\n"
    "2021,1,verstappen,red_bull,1,Finished,56,0,permanent\n"
    "2021,1,ocon,alpine,3,+2 Laps,54,0,permanent\n"
    "2021,1,mazepin,haas,,Spun off,0,0,permanent\n";

std::vector<std::string> ids(const RankOutcome& o, const CompetitorIndex& idx) {
  std::vector<std::string> out;
  for (const auto& c : o.competitors) out.push_back(idx.drivers()[c.driver]);
  return out;
}

}  // namespace

TEST(ParseResults, ReadsRowsAndCounts) {
  const auto data = parse(kSmall);
  ASSERT_EQ(data.rows.size(), 13u);
  const auto counts = count(data);
  EXPECT_EQ(counts.races, 3u);
  EXPECT_EQ(counts.drivers, 7u);
  EXPECT_EQ(counts.constructors, 6u);
  EXPECT_FALSE(data.rows[3].finish_position.has_value());
  EXPECT_EQ(data.rows[3].status, "Engine");
  EXPECT_TRUE(data.rows[5].wet_race);
  EXPECT_FALSE(data.rows[5].permanent_circuit);
  EXPECT_EQ(data.rows[12].source_row, 13u);
}

TEST(ParseResults, EmptyDatasetIsAnError) {
  try {
    parse("");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty dataset"), std::string::npos);
  }
  std::istringstream nothing("");
  EXPECT_THROW(parse_results(nothing), DataError);
}

TEST(ParseResults, MissingColumnNamesTheColumn) {
  std::istringstream in("season,round,driver_id,constructor_id,position,status,laps,wet\n2021,1,a,b,1,Finished,3,0\n");
  try {
    parse_results(in);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("circuit_type"), std::string::npos);
  }
}

TEST(ParseResults, BadRowReportsRowNumber) {
  try {
    parse("2021,1,a,b,1,Finished,3,0,permanent\n2021,1,c,d,first,Finished,3,0,permanent\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  EXPECT_THROW(parse("2021,1,a,b,1,Finished,3,maybe,permanent\n"), DataError);
  EXPECT_THROW(parse("2021,1,a,b,1,Finished,3,0,oval\n"), DataError);
  EXPECT_THROW(parse("2021,1,a,b,1,Finished,3,0\n"), DataError);
  EXPECT_THROW(parse("2021,1,a:x,b,1,Finished,3,0,permanent\n"), DataError);
  EXPECT_THROW(parse("2021,1,a,b,0,Finished,3,0,permanent\n"), DataError);
}

TEST(ParseResults, SchemaMappingAndSeasonRange) {
  std::istringstream in(
      "year,race,driver,team,pos,result,laps_done,rain,track\n"
      "2013,1,a,x,1,Finished,3,0,permanent\n"
      "2014,1,a,x,1,Finished,3,0,permanent\n"
      "2014,1,b,y,2,Finished,3,0,permanent\n");
  ColumnSchema schema;
  schema.season = "year", schema.round = "race", schema.driver = "driver", schema.constructor = "team";
  schema.position = "pos", schema.status = "result", schema.laps = "laps_done", schema.wet = "rain";
  schema.circuit = "track";
  schema.first_season = 2014;
  const auto data = parse_results(in, schema);
  ASSERT_EQ(data.rows.size(), 2u);
  EXPECT_EQ(data.rows[0].season, 2014);
}

TEST(ParseResults, QuotedFieldsAndMarkers) {
  const auto data = parse("2021,1,a,b,\\N,\"Collision damage\",3,0,permanent\n2021,1,c,d,R,Engine,2,0,permanent\n");
  EXPECT_EQ(data.rows[0].status, "Collision damage");
  EXPECT_FALSE(data.rows[0].finish_position);
  EXPECT_FALSE(data.rows[1].finish_position);
}

TEST(ParseResults, MissingFileNamesThePath) {
  try {
    parse_results(std::string("/nonexistent/results.csv"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/results.csv"), std::string::npos);
  }
}

TEST(StatusLists, SizesAndMembership) {
  EXPECT_EQ(kDriverRelatedStatuses.size(), 9u);
  EXPECT_EQ(kCarRelatedStatuses.size(), 42u);
  EXPECT_EQ(classify_status("Collision", false), StatusClass::driver_failure);
  EXPECT_EQ(classify_status("Disqualified", false), StatusClass::driver_failure);
  EXPECT_EQ(classify_status("Withdrew", false), StatusClass::driver_failure);
  EXPECT_EQ(classify_status("Retired", false), StatusClass::driver_failure);
  EXPECT_EQ(classify_status("Excluded", false), StatusClass::driver_failure);
  EXPECT_EQ(classify_status("Damage", false), StatusClass::car_failure);
  EXPECT_EQ(classify_status("Engine", true), StatusClass::car_failure);
  EXPECT_EQ(classify_status("+1 Lap", true), StatusClass::finished);
  EXPECT_EQ(classify_status("+3 Laps", false), StatusClass::finished);
  EXPECT_EQ(classify_status("Finished", true), StatusClass::finished);
  EXPECT_EQ(classify_status("Unheard of", true), StatusClass::finished);
  EXPECT_THROW(classify_status("Unheard of", false), DataError);
  std::set<std::string_view> driver(kDriverRelatedStatuses.begin(), kDriverRelatedStatuses.end());
  for (auto s : kCarRelatedStatuses) EXPECT_EQ(driver.count(s), 0u) << s;
}

TEST(ApplyFilter, Regimes) {
  const auto data = parse(kSmall);
  EXPECT_EQ(apply_filter(data, FilterRegime::all_ranked).rows.size(), 13u);
  EXPECT_EQ(apply_filter(data, FilterRegime::drop_car_failures).rows.size(), 11u);
  EXPECT_EQ(apply_filter(data, FilterRegime::drop_driver_failures).rows.size(), 11u);
  EXPECT_EQ(apply_filter(data, FilterRegime::finishers_only).rows.size(), 9u);
}

TEST(ApplyFilter, EngineDropsUnderCarRegime) {
  const auto data = parse(
      "2021,1,a,x,1,Finished,3,0,permanent\n2021,1,b,y,2,Finished,3,0,permanent\n"
      "2021,1,c,z,,Engine,1,0,permanent\n");
  EXPECT_EQ(apply_filter(data, FilterRegime::drop_car_failures).rows.size(), 2u);
}

TEST(ApplyFilter, IdempotentAndOrdered) {
  const auto data = parse(kSmall);
  const auto once = apply_filter(data, FilterRegime::finishers_only);
  const auto twice = apply_filter(once, FilterRegime::finishers_only);
  ASSERT_EQ(once.rows.size(), twice.rows.size());
  for (std::size_t i = 0; i < once.rows.size(); ++i) EXPECT_EQ(once.rows[i].source_row, twice.rows[i].source_row);
  const auto all = apply_filter(data, FilterRegime::all_ranked).rows.size();
  const auto fin = once.rows.size();
  EXPECT_GE(all, apply_filter(data, FilterRegime::drop_car_failures).rows.size());
  EXPECT_GE(apply_filter(data, FilterRegime::drop_driver_failures).rows.size(), fin);
}

TEST(ApplyFilter, UnknownStatusesListedTogether) {
  const auto data = parse(
      "2021,1,a,x,,Teleported,3,0,permanent\n2021,1,b,y,,Abducted,3,0,permanent\n"
      "2021,1,c,z,1,Finished,3,0,permanent\n");
  try {
    apply_filter(data, FilterRegime::all_ranked);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("Teleported"), std::string::npos);
    EXPECT_NE(msg.find("Abducted"), std::string::npos);
  }
}

TEST(FilterRegimeNames, RoundTrip) {
  for (auto r : {FilterRegime::all_ranked, FilterRegime::drop_car_failures, FilterRegime::drop_driver_failures,
                 FilterRegime::finishers_only})
    EXPECT_EQ(parse_filter_regime(to_string(r)), r);
  EXPECT_EQ(parse_filter_regime("finishers-only"), FilterRegime::finishers_only);
  EXPECT_THROW(parse_filter_regime("some"), ConfigError);
}

TEST(CompetitorIndex, DenseSortedAndRoundTrips) {
  const auto data = apply_filter(parse(kSmall), FilterRegime::all_ranked);
  const auto idx = build_index(data);
  EXPECT_TRUE(std::is_sorted(idx.drivers().begin(), idx.drivers().end()));
  EXPECT_TRUE(std::is_sorted(idx.constructors().begin(), idx.constructors().end()));
  EXPECT_EQ(idx.seasons(), (std::vector<int>{2020, 2021}));
  for (std::size_t d = 0; d < idx.drivers().size(); ++d) EXPECT_EQ(idx.driver(idx.drivers()[d]), d);
  for (std::size_t t = 0; t < idx.constructors().size(); ++t)
    EXPECT_EQ(idx.constructor(idx.constructors()[t]), t);
  EXPECT_FALSE(idx.driver("senna"));
  // ocon: one driver-season per year, but two constructor pairings in 2020.
  const auto ocon = *idx.driver("ocon");
  EXPECT_TRUE(idx.driver_season(ocon, 0));
  EXPECT_TRUE(idx.driver_season(ocon, 1));
  EXPECT_TRUE(idx.constructor_season(*idx.constructor("renault"), 0));
  EXPECT_FALSE(idx.constructor_season(*idx.constructor("renault"), 1));
  EXPECT_EQ(idx.driver_seasons().size(), 9u);
  EXPECT_EQ(idx.driver_season_label(*idx.driver_season(ocon, 1)), "ocon,2021");
}

TEST(BuildOutcomes, OrdersWinnerFirstAndCopiesFlags) {
  const auto data = apply_filter(parse(kSmall), FilterRegime::finishers_only);
  const auto idx = build_index(data);
  const auto out = build_outcomes(data, idx);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(ids(out[0], idx), (std::vector<std::string>{"hamilton", "bottas", "ocon"}));
  EXPECT_EQ(ids(out[2], idx), (std::vector<std::string>{"verstappen", "hamilton", "ocon"}));
  EXPECT_TRUE(out[1].wet_race);
  EXPECT_FALSE(out[1].permanent_circuit);
  EXPECT_EQ(out[2].label(), "2021-01");
  // The 2020 ocon entries map to different constructors but one driver-season.
  EXPECT_NE(out[0].competitors[2].constructor, out[1].competitors[1].constructor);
  EXPECT_EQ(out[0].competitors[2].driver_season, out[1].competitors[1].driver_season);
}

TEST(BuildOutcomes, NonFinishersRankedByLaps) {
  const auto data = apply_filter(parse(kSmall), FilterRegime::all_ranked);
  const auto idx = build_index(data);
  const auto out = build_outcomes(data, idx);
  EXPECT_EQ(ids(out[0], idx), (std::vector<std::string>{"hamilton", "bottas", "ocon", "kvyat", "grosjean"}));
  EXPECT_FALSE(out[0].competitors[3].finished);
  EXPECT_TRUE(out[0].competitors[2].finished);
}

TEST(BuildOutcomes, FlatteningRecoversRows) {
  for (auto regime : {FilterRegime::all_ranked, FilterRegime::finishers_only}) {
    const auto data = apply_filter(parse(kSmall), regime);
    const auto idx = build_index(data);
    std::multiset<std::string> rows, flat;
    for (const auto& r : data.rows)
      rows.insert(std::to_string(r.season) + r.driver_id + r.constructor_id + std::to_string(r.round));
    for (const auto& o : build_outcomes(data, idx))
      for (const auto& c : o.competitors)
        flat.insert(std::to_string(o.season) + idx.drivers()[c.driver] + idx.constructors()[c.constructor] +
                    std::to_string(o.round));
    EXPECT_EQ(rows, flat);
  }
}

TEST(BuildOutcomes, IntegrityErrors) {
  auto tied = parse("2021,1,a,x,1,Finished,3,0,permanent\n2021,1,b,y,1,Finished,3,0,permanent\n");
  EXPECT_THROW(build_outcomes(tied, build_index(tied)), DataError);
  auto dup = parse("2021,1,a,x,1,Finished,3,0,permanent\n2021,1,a,x,2,Finished,3,0,permanent\n");
  EXPECT_THROW(build_outcomes(dup, build_index(dup)), DataError);
  auto flags = parse("2021,1,a,x,1,Finished,3,1,permanent\n2021,1,b,y,2,Finished,3,0,permanent\n");
  EXPECT_THROW(build_outcomes(flags, build_index(flags)), DataError);
}

TEST(BuildOutcomes, ShortRacesDroppedWithWarning) {
  auto data = parse(
      "2021,1,a,x,1,Finished,3,0,permanent\n2021,1,b,y,,Engine,3,0,permanent\n"
      "2021,2,a,x,1,Finished,3,0,permanent\n2021,2,b,y,2,Finished,3,0,permanent\n");
  data = apply_filter(data, FilterRegime::finishers_only);
  std::vector<std::string> warnings;
  const auto out = build_outcomes(data, build_index(data), &warnings);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].round, 2);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("2021 round 1"), std::string::npos);
}

TEST(SummarizeCorpus, CountsAndDegenerateCases) {
  const auto data = apply_filter(parse(kSmall), FilterRegime::finishers_only);
  const auto idx = build_index(data);
  const auto outcomes = build_outcomes(data, idx);
  const auto r = summarize_corpus(outcomes, idx);
  EXPECT_EQ(r.races, 3u);
  EXPECT_EQ(r.entries, 9u);
  EXPECT_EQ(r.wet_races, 1u);
  EXPECT_EQ(r.street_races, 1u);
  EXPECT_EQ(r.driver_entries.at("hamilton"), 3u);
  EXPECT_EQ(r.min_competitors, 3u);
  EXPECT_NE(format_corpus_report(r).find("races=3\n"), std::string::npos);

  const std::vector<RankOutcome> single(outcomes.begin(), outcomes.begin() + 1);
  EXPECT_EQ(summarize_corpus(single, idx).races, 1u);
  EXPECT_THROW(summarize_corpus({}, idx), DataError);
}
