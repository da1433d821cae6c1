#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "f1rank/pipeline.hpp"
#include "f1rank/synthetic.hpp"

using namespace f1rank;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("f1rank_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const FitResult& small_fit() {
  static const FitResult fit = [] {
    synthetic::Settings s;
    s.seasons = 2;
    s.races_per_season = 3;
    s.teams = 3;
    s.driver_pool = 8;
    const auto champ = synthetic::simulate(s);
    RunConfig cfg;
    cfg.spec.filter_regime = FilterRegime::all_ranked;
    cfg.sampler.chains = 2;
    cfg.sampler.warmup_iterations = 40;
    cfg.sampler.sampling_iterations = 25;
    cfg.sampler.seed = 99;
    return fit_prepared(cfg, prepare(champ.data, cfg.spec.filter_regime));
  }();
  return fit;
}

}  // namespace

TEST(Config, OverlayKeepsUnsetValues) {
  RunConfig base;
  base.sampler.chains = 3;
  base.data_path = "a.csv";
  const auto cfg = run_config_from_json(
      json::parse(R"({"sampler": {"seed": 5}, "model": {"model": "weather", "dynamics": "ar1"}})"), base);
  EXPECT_EQ(cfg.sampler.chains, 3u);
  EXPECT_EQ(cfg.sampler.seed, 5u);
  EXPECT_EQ(cfg.data_path, "a.csv");
  EXPECT_TRUE(cfg.spec.wet_slope);
  EXPECT_EQ(cfg.spec.dynamics, Dynamics::ar1);
}

TEST(Config, RoundTripsThroughJson) {
  RunConfig cfg;
  cfg.data_path = "x.csv";
  cfg.schema.first_season = 2015;
  cfg.spec.circuit_slope = true;
  cfg.sampler.target_acceptance = 0.9;
  cfg.points = {10, 6, 4, 3, 2, 1};
  const auto back = run_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_THROW(run_config_from_json(json::parse(R"({"sampler": {"chain": 4}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"bogus": 1})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"sampler": {"chains": "four"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"model": {"filter": "wet"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"model": {"model": "turbo"}})")), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
  const auto dir = scratch("badjson");
  spit(dir / "c.json", "{ not json");
  EXPECT_THROW(load_run_config((dir / "c.json").string()), ConfigError);
}

TEST(Config, HashIgnoresOutputAndThreads) {
  RunConfig a;
  const auto h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  RunConfig b = a;
  b.out_dir = "elsewhere";
  b.sampler.threads = 7;
  EXPECT_EQ(config_hash(b), h);
  b.sampler.seed += 1;
  EXPECT_NE(config_hash(b), h);
  RunConfig c = a;
  c.spec.filter_regime = FilterRegime::all_ranked;
  EXPECT_NE(config_hash(c), h);
}

TEST(FitFiles, RoundTripIsExact) {
  const auto& fit = small_fit();
  const auto dir = scratch("roundtrip");
  write_fit(dir, fit, diagnose(fit.draws));
  for (const char* f : {"fit.json", "draws.csv", "loglik.csv", "sampler.csv", "diagnostics.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_NE(slurp(dir / "draws.csv").find("# config_hash=" + fit.hash), std::string::npos);

  const auto back = read_fit(dir);
  EXPECT_EQ(back.hash, fit.hash);
  EXPECT_EQ(back.draws.names, fit.draws.names);
  EXPECT_EQ(back.draws.values, fit.draws.values);
  EXPECT_EQ(back.draws.per_race_loglik, fit.draws.per_race_loglik);
  EXPECT_EQ(back.draws.pointwise_labels, fit.draws.pointwise_labels);
  EXPECT_EQ(back.draws.log_density, fit.draws.log_density);
  EXPECT_EQ(back.draws.divergent, fit.draws.divergent);
  EXPECT_EQ(back.context.outcomes.size(), fit.context.outcomes.size());
  EXPECT_EQ(back.context.index.drivers(), fit.context.index.drivers());
  // Analyses on the reloaded fit agree with the original.
  const int season = fit.context.index.seasons().back();
  const auto r1 = driver_ranking(fit.draws, fit.context, season);
  const auto r2 = driver_ranking(back.draws, back.context, season);
  ASSERT_EQ(r1.size(), r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].name, r2[i].name);
    EXPECT_EQ(r1[i].mean, r2[i].mean);
  }
}

TEST(FitFiles, TamperingIsDetected) {
  const auto& fit = small_fit();
  const auto dir = scratch("tamper");
  write_fit(dir, fit, diagnose(fit.draws));

  auto text = slurp(dir / "draws.csv");
  const auto at = text.find("# config_hash=") + 14;
  auto changed = text;
  changed[at] = changed[at] == '0' ? '1' : '0';
  spit(dir / "draws.csv", changed);
  EXPECT_THROW(read_fit(dir), AnalysisError);
  spit(dir / "draws.csv", text);
  EXPECT_NO_THROW(read_fit(dir));

  // Dropping a draw row.
  spit(dir / "draws.csv", text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  EXPECT_THROW(read_fit(dir), AnalysisError);
  spit(dir / "draws.csv", text);

  // Editing the config without updating the hash.
  auto meta = json::parse(slurp(dir / "fit.json"));
  meta["config"]["sampler"]["seed"] = 12345;
  spit(dir / "fit.json", meta.dump());
  EXPECT_THROW(read_fit(dir), AnalysisError);

  fs::remove(dir / "fit.json");
  EXPECT_THROW(read_fit(dir), AnalysisError);
}

TEST(Reports, CsvAndJsonWithProvenance) {
  const auto& fit = small_fit();
  const auto dir = scratch("report");
  const auto prov = Provenance::of(fit);
  Table t{{"name", "value"}, {{"a,b", "1.5"}, {"plain", "2"}}};
  write_report(dir, "demo", prov, t, {{"note", "x"}});
  const auto csv = slurp(dir / "demo.csv");
  EXPECT_EQ(csv.rfind("# ", 0), 0u);
  EXPECT_NE(csv.find("# config_hash=" + fit.hash), std::string::npos);
  EXPECT_NE(csv.find("name,value\n\"a,b\",1.5\nplain,2\n"), std::string::npos);
  const auto j = json::parse(slurp(dir / "demo.json"));
  EXPECT_EQ(j["provenance"]["config_hash"], fit.hash);
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["note"], "x");
}

TEST(Reports, NumberFormatting) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(1.0 / 3.0, 4), "0.3333");
  EXPECT_EQ(format_number(15.30, 4), "15.3");
}

TEST(Pipeline, SameCorpusDetectsFilterDifferences) {
  synthetic::Settings s;
  s.seasons = 1;
  s.races_per_season = 2;
  auto data = synthetic::simulate(s).data;
  EXPECT_TRUE(same_corpus(data, data));
  auto changed = data;
  changed.rows.back().status = "Engine";
  changed.rows.back().finish_position.reset();
  EXPECT_FALSE(same_corpus(data, changed));
  EXPECT_FALSE(same_corpus(data, apply_filter(changed, FilterRegime::finishers_only)));
}
