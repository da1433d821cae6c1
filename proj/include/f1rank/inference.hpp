#pragma once

// Posterior summaries and analyses computed from stored draws.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "f1rank/data.hpp"
#include "f1rank/draws.hpp"
#include "f1rank/error.hpp"
#include "f1rank/model.hpp"
#include "f1rank/rol.hpp"

namespace f1rank {

/// Everything about a fit that analyses need besides the draws.
struct FitContext {
  ModelSpec spec;
  CompetitorIndex index;
  std::vector<RankOutcome> outcomes;
};

inline constexpr double kIntervalLower = 0.055;
inline constexpr double kIntervalUpper = 0.945;

struct Summary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;  // 5.5% quantile
  double upper = 0.0;  // 94.5% quantile
};

/// Linear-interpolation sample quantile (type 7).
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw AnalysisError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline Summary summarize_values(const std::string& name, const std::vector<double>& values) {
  if (values.empty()) throw AnalysisError("no draws for " + name);
  Summary s;
  s.name = name;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  s.lower = quantile(values, kIntervalLower);
  s.upper = quantile(values, kIntervalUpper);
  return s;
}

inline std::vector<Summary> summarize(const PosteriorDraws& draws,
                                      const std::vector<std::string>& names) {
  std::vector<Summary> out;
  for (const auto& n : names) out.push_back(summarize_values(n, draws.pooled(draws.require_column(n))));
  return out;
}

/// Covariate setting under which slope models evaluate an effect.
struct RaceConditions {
  bool wet_race = false;
  bool permanent_circuit = true;
};

namespace inference_detail {

inline std::string season_key(const std::string& id, int year) {
  return id + "," + std::to_string(year);
}

/// Per-draw long-run driver effect, including the wet slope when applicable.
inline std::vector<double> driver_effect(const PosteriorDraws& draws, const ModelSpec& spec,
                                         const std::string& id, RaceConditions when) {
  if (!spec.wet_slope) return draws.pooled(draws.require_column("theta_d[" + id + "]"));
  auto v = draws.pooled(draws.require_column("gamma0d[" + id + "]"));
  if (when.wet_race) {
    const auto slope = draws.pooled(draws.require_column("gamma1d[" + id + "]"));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += slope[i];
  }
  return v;
}

inline std::vector<double> team_effect(const PosteriorDraws& draws, const ModelSpec& spec,
                                       const std::string& id, RaceConditions when) {
  if (!spec.circuit_slope) return draws.pooled(draws.require_column("theta_t[" + id + "]"));
  auto v = draws.pooled(draws.require_column("gamma0t[" + id + "]"));
  if (when.permanent_circuit) {
    const auto slope = draws.pooled(draws.require_column("gamma1t[" + id + "]"));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += slope[i];
  }
  return v;
}

inline std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

/// Column indices that make up one competitor's ability in one race.
struct AbilityColumns {
  std::vector<std::size_t> columns;
};

inline AbilityColumns ability_columns(const PosteriorDraws& draws, const FitContext& ctx,
                                      const Competitor& c, const RankOutcome& race) {
  const auto& idx = ctx.index;
  const auto& d = idx.drivers()[c.driver];
  const auto& t = idx.constructors()[c.constructor];
  const int year = idx.seasons()[c.season];
  AbilityColumns a;
  a.columns.push_back(draws.require_column((ctx.spec.wet_slope ? "gamma0d[" : "theta_d[") + d + "]"));
  a.columns.push_back(draws.require_column("theta_ds[" + season_key(d, year) + "]"));
  a.columns.push_back(draws.require_column((ctx.spec.circuit_slope ? "gamma0t[" : "theta_t[") + t + "]"));
  a.columns.push_back(draws.require_column("theta_ts[" + season_key(t, year) + "]"));
  if (ctx.spec.wet_slope && race.wet_race) a.columns.push_back(draws.require_column("gamma1d[" + d + "]"));
  if (ctx.spec.circuit_slope && race.permanent_circuit)
    a.columns.push_back(draws.require_column("gamma1t[" + t + "]"));
  return a;
}

inline double ability_at(const PosteriorDraws& draws, std::size_t draw, const AbilityColumns& a) {
  double v = 0.0;
  const std::size_t row = draw * draws.columns();
  for (std::size_t c : a.columns) v += draws.values[row + c];
  return v;
}

/// Evenly spaced draw indices; all draws when there are at most `max_draws`.
inline std::vector<std::size_t> thinned_draws(std::size_t total, std::size_t max_draws) {
  std::vector<std::size_t> out;
  if (max_draws == 0 || total <= max_draws) {
    for (std::size_t i = 0; i < total; ++i) out.push_back(i);
    return out;
  }
  const std::size_t stride = total / max_draws;
  for (std::size_t i = 0; i < total; i += stride) out.push_back(i);
  return out;
}

inline std::vector<std::size_t> season_races(const FitContext& ctx, int season) {
  std::vector<std::size_t> races;
  for (std::size_t r = 0; r < ctx.outcomes.size(); ++r)
    if (ctx.outcomes[r].season == season) races.push_back(r);
  if (races.empty()) throw AnalysisError("season " + std::to_string(season) + " is absent from the fit");
  return races;
}

}  // namespace inference_detail

struct TrajectoryPoint {
  std::string entity;
  int season = 0;
  Summary summary;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  std::vector<std::string> notes;  // skipped (entity, season) pairs
};

/// Summaries of per-draw driver effect plus driver-season effect.
inline Trajectory skill_trajectory(const PosteriorDraws& draws, const FitContext& ctx,
                                   const std::vector<std::string>& drivers,
                                   const std::vector<int>& seasons, RaceConditions when = {}) {
  Trajectory out;
  for (const auto& id : drivers) {
    auto d = ctx.index.driver(id);
    if (!d) throw AnalysisError("unknown driver '" + id + "'");
    const auto base = inference_detail::driver_effect(draws, ctx.spec, id, when);
    for (int year : seasons) {
      auto s = ctx.index.season(year);
      if (!s || !ctx.index.driver_season(*d, *s)) {
        out.notes.push_back(id + " has no " + std::to_string(year) + " season; skipped");
        continue;
      }
      const auto form = draws.pooled(
          draws.require_column("theta_ds[" + inference_detail::season_key(id, year) + "]"));
      out.points.push_back({id, year,
                            summarize_values(inference_detail::season_key(id, year),
                                             inference_detail::add(base, form))});
    }
  }
  return out;
}

/// Summaries of per-draw constructor effect plus constructor-season effect.
inline Trajectory advantage_trajectory(const PosteriorDraws& draws, const FitContext& ctx,
                                       const std::vector<std::string>& teams,
                                       const std::vector<int>& seasons, RaceConditions when = {}) {
  Trajectory out;
  for (const auto& id : teams) {
    auto t = ctx.index.constructor(id);
    if (!t) throw AnalysisError("unknown constructor '" + id + "'");
    const auto base = inference_detail::team_effect(draws, ctx.spec, id, when);
    for (int year : seasons) {
      auto s = ctx.index.season(year);
      if (!s || !ctx.index.constructor_season(*t, *s)) {
        out.notes.push_back(id + " has no " + std::to_string(year) + " season; skipped");
        continue;
      }
      const auto form = draws.pooled(
          draws.require_column("theta_ts[" + inference_detail::season_key(id, year) + "]"));
      out.points.push_back({id, year,
                            summarize_values(inference_detail::season_key(id, year),
                                             inference_detail::add(base, form))});
    }
  }
  return out;
}

/// Drivers of one season ranked by posterior mean of driver plus
/// driver-season effect, best first. Summary names are driver ids.
inline std::vector<Summary> driver_ranking(const PosteriorDraws& draws, const FitContext& ctx,
                                           int season, RaceConditions when = {}) {
  auto s = ctx.index.season(season);
  if (!s) throw AnalysisError("season " + std::to_string(season) + " is absent from the fit");
  std::vector<Summary> out;
  for (const auto& p : ctx.index.driver_seasons()) {
    if (p.season != *s) continue;
    const auto& id = ctx.index.drivers()[p.entity];
    const auto values = inference_detail::add(
        inference_detail::driver_effect(draws, ctx.spec, id, when),
        draws.pooled(draws.require_column("theta_ds[" + inference_detail::season_key(id, season) + "]")));
    out.push_back(summarize_values(id, values));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Summary& a, const Summary& b) { return a.mean > b.mean; });
  return out;
}

/// Long-run constructor effects, best first.
inline std::vector<Summary> constructor_ranking(const PosteriorDraws& draws, const FitContext& ctx,
                                                RaceConditions when = {}) {
  std::vector<Summary> out;
  for (const auto& id : ctx.index.constructors())
    out.push_back(summarize_values(id, inference_detail::team_effect(draws, ctx.spec, id, when)));
  std::stable_sort(out.begin(), out.end(),
                   [](const Summary& a, const Summary& b) { return a.mean > b.mean; });
  return out;
}

struct PpcEntry {
  std::string driver;
  std::string constructor;
  std::size_t races = 0;
  std::vector<double> simulated;  // share of simulations per finishing position (index 0 = P1)
  std::vector<double> observed;   // share of observed races per finishing position
  double simulated_mean = 0.0;
  double observed_mean = 0.0;
};

struct PpcReport {
  int season = 0;
  std::size_t draws_used = 0;
  std::vector<PpcEntry> entries;
};

/// Simulates every race of `season` once per (thinned) posterior draw and
/// tallies each competitor's simulated finishing positions next to the
/// observed ones.
template <class Rng>
PpcReport posterior_predictive_check(const PosteriorDraws& draws, const FitContext& ctx, int season,
                                     Rng& rng, std::size_t max_draws = 500) {
  using namespace inference_detail;
  const auto races = season_races(ctx, season);
  std::size_t field = 0;
  for (auto r : races) field = std::max(field, ctx.outcomes[r].competitors.size());

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot;
  PpcReport report;
  report.season = season;
  std::vector<std::vector<double>> sim_counts, obs_counts;
  auto entry = [&](const Competitor& c) {
    auto [it, inserted] = slot.emplace(std::pair{c.driver, c.constructor}, report.entries.size());
    if (inserted) {
      PpcEntry e;
      e.driver = ctx.index.drivers()[c.driver];
      e.constructor = ctx.index.constructors()[c.constructor];
      report.entries.push_back(std::move(e));
      sim_counts.emplace_back(field, 0.0);
      obs_counts.emplace_back(field, 0.0);
    }
    return it->second;
  };

  const auto selected = thinned_draws(draws.draw_count(), max_draws);
  report.draws_used = selected.size();
  std::vector<double> abilities;
  for (auto r : races) {
    const auto& race = ctx.outcomes[r];
    std::vector<AbilityColumns> cols;
    std::vector<std::size_t> slots;
    for (std::size_t k = 0; k < race.competitors.size(); ++k) {
      cols.push_back(ability_columns(draws, ctx, race.competitors[k], race));
      slots.push_back(entry(race.competitors[k]));
      obs_counts[slots.back()][k] += 1.0;
      ++report.entries[slots.back()].races;
    }
    abilities.resize(cols.size());
    for (auto s : selected) {
      for (std::size_t k = 0; k < cols.size(); ++k) abilities[k] = ability_at(draws, s, cols[k]);
      const auto order = sample_ranking(abilities, rng);
      for (std::size_t pos = 0; pos < order.size(); ++pos) sim_counts[slots[order[pos]]][pos] += 1.0;
    }
  }
  for (std::size_t e = 0; e < report.entries.size(); ++e) {
    auto& en = report.entries[e];
    const double n_obs = static_cast<double>(en.races);
    const double n_sim = n_obs * static_cast<double>(selected.size());
    en.simulated.resize(field);
    en.observed.resize(field);
    for (std::size_t p = 0; p < field; ++p) {
      en.simulated[p] = sim_counts[e][p] / n_sim;
      en.observed[p] = obs_counts[e][p] / n_obs;
      en.simulated_mean += static_cast<double>(p + 1) * en.simulated[p];
      en.observed_mean += static_cast<double>(p + 1) * en.observed[p];
    }
  }
  return report;
}

/// Points by finishing position, winner first; defaults to the 2021 top-ten
/// scale without fastest-lap or sprint points.
using PointsTable = std::vector<double>;

inline PointsTable default_points_table() { return {25, 18, 15, 12, 10, 8, 6, 4, 2, 1}; }

inline double points_for(const PointsTable& table, std::size_t position0) {
  return position0 < table.size() ? table[position0] : 0.0;
}

struct SeasonPointsEntry {
  std::string driver;
  std::string constructor;
  std::size_t races = 0;  // races the entrant finished
  Summary expected;       // per-race average points, over draws
  double observed = 0.0;  // realized per-race average
};

struct SeasonPointsReport {
  int season = 0;
  std::size_t draws_used = 0;
  std::vector<SeasonPointsEntry> entries;  // sorted by expected mean, descending
  std::vector<std::string> notes;
};

/// Per posterior draw, re-simulates the order of each race's actual finishers
/// and averages each entrant's points over the races it finished.
template <class Rng>
SeasonPointsReport simulate_season_points(const PosteriorDraws& draws, const FitContext& ctx,
                                          int season, const PointsTable& points, Rng& rng,
                                          std::size_t max_draws = 0) {
  using namespace inference_detail;
  const auto races = season_races(ctx, season);
  SeasonPointsReport report;
  report.season = season;

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot;
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  std::map<std::pair<std::size_t, std::size_t>, bool> seen_any;
  std::vector<double> observed_total;
  std::vector<std::size_t> finished_races;
  struct RacePlan {
    std::vector<AbilityColumns> cols;
    std::vector<std::size_t> slots;
  };
  std::vector<RacePlan> plans;
  for (auto r : races) {
    const auto& race = ctx.outcomes[r];
    RacePlan plan;
    std::size_t position = 0;
    for (const auto& c : race.competitors) {
      const auto key = std::pair{c.driver, c.constructor};
      seen_any[key] = true;
      if (!c.finished) continue;
      auto [it, inserted] = slot.emplace(key, keys.size());
      if (inserted) {
        keys.push_back(key);
        observed_total.push_back(0.0);
        finished_races.push_back(0);
      }
      plan.cols.push_back(ability_columns(draws, ctx, c, race));
      plan.slots.push_back(it->second);
      observed_total[it->second] += points_for(points, position++);
      ++finished_races[it->second];
    }
    if (!plan.cols.empty()) plans.push_back(std::move(plan));
  }
  for (const auto& [key, _] : seen_any) {
    if (!slot.count(key)) {
      report.notes.push_back(ctx.index.drivers()[key.first] + " (" +
                             ctx.index.constructors()[key.second] +
                             ") finished no retained race; excluded");
    }
  }

  const auto selected = thinned_draws(draws.draw_count(), max_draws);
  report.draws_used = selected.size();
  std::vector<std::vector<double>> per_draw(keys.size(), std::vector<double>(selected.size(), 0.0));
  std::vector<double> abilities;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    for (const auto& plan : plans) {
      abilities.resize(plan.cols.size());
      for (std::size_t k = 0; k < plan.cols.size(); ++k)
        abilities[k] = ability_at(draws, selected[j], plan.cols[k]);
      const auto order = sample_ranking(abilities, rng);
      for (std::size_t pos = 0; pos < order.size(); ++pos)
        per_draw[plan.slots[order[pos]]][j] += points_for(points, pos);
    }
  }
  for (std::size_t e = 0; e < keys.size(); ++e) {
    const double n = static_cast<double>(finished_races[e]);
    for (auto& v : per_draw[e]) v /= n;
    SeasonPointsEntry entry;
    entry.driver = ctx.index.drivers()[keys[e].first];
    entry.constructor = ctx.index.constructors()[keys[e].second];
    entry.races = finished_races[e];
    entry.expected = summarize_values(entry.driver, per_draw[e]);
    entry.observed = observed_total[e] / n;
    report.entries.push_back(std::move(entry));
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const auto& a, const auto& b) { return a.expected.mean > b.expected.mean; });
  return report;
}

struct DecompositionReport {
  Summary constructor_variance;         // sigma_t^2
  Summary constructor_season_variance;  // sigma_ts^2
  Summary driver_variance;              // sigma_d^2
  Summary driver_season_variance;       // sigma_ds^2
  Summary constructor_share;
  Summary driver_share;
  std::vector<double> share_draws;
};

/// Share of ability variance attributable to the constructor, computed per
/// draw from the four random-effect variances.
inline DecompositionReport variance_decomposition(const PosteriorDraws& draws) {
  auto squared = [&](const char* name) {
    auto c = draws.column_index(name);
    if (!c) throw AnalysisError(std::string("variance decomposition needs ") + name);
    auto v = draws.pooled(*c);
    for (auto& x : v) x *= x;
    return v;
  };
  const auto t = squared("sigma_t"), ts = squared("sigma_ts"), d = squared("sigma_d"),
             ds = squared("sigma_ds");
  DecompositionReport r;
  r.share_draws.resize(t.size());
  std::vector<double> driver_share(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double team = t[i] + ts[i];
    r.share_draws[i] = team / (team + d[i] + ds[i]);
    driver_share[i] = (d[i] + ds[i]) / (team + d[i] + ds[i]);
  }
  r.constructor_variance = summarize_values("sigma_t^2", t);
  r.constructor_season_variance = summarize_values("sigma_ts^2", ts);
  r.driver_variance = summarize_values("sigma_d^2", d);
  r.driver_season_variance = summarize_values("sigma_ds^2", ds);
  r.constructor_share = summarize_values("constructor_share", r.share_draws);
  r.driver_share = summarize_values("driver_share", driver_share);
  return r;
}

/// A hypothetical driver-constructor pairing in a season.
struct Entrant {
  std::string driver;
  std::string constructor;
  int season = 0;

  std::string label() const { return driver + ":" + constructor + ":" + std::to_string(season); }
};

inline Entrant parse_entrant(const std::string& text) {
  const auto a = text.find(':');
  const auto b = a == std::string::npos ? a : text.find(':', a + 1);
  if (b == std::string::npos) throw ConfigError("entrant must look like driver:team:season, got '" + text + "'");
  Entrant e{text.substr(0, a), text.substr(a + 1, b - a - 1), 0};
  auto year = detail::parse_int(text.substr(b + 1));
  if (!year) throw ConfigError("entrant season must be a year, got '" + text + "'");
  e.season = *year;
  return e;
}

struct CounterfactualResult {
  Entrant a;
  Entrant b;
  std::vector<double> draws;  // probability that a finishes ahead of b
  Summary summary;
};

inline std::vector<double> entrant_ability(const PosteriorDraws& draws, const FitContext& ctx,
                                           const Entrant& e, RaceConditions when = {}) {
  const auto& idx = ctx.index;
  auto d = idx.driver(e.driver);
  if (!d) throw AnalysisError("missing component: driver '" + e.driver + "' is not in the fit");
  auto t = idx.constructor(e.constructor);
  if (!t) throw AnalysisError("missing component: constructor '" + e.constructor + "' is not in the fit");
  auto s = idx.season(e.season);
  if (!s) throw AnalysisError("missing component: season " + std::to_string(e.season) + " is not in the fit");
  if (!idx.driver_season(*d, *s))
    throw AnalysisError("missing component: driver-season effect " + e.driver + "," + std::to_string(e.season));
  if (!idx.constructor_season(*t, *s))
    throw AnalysisError("missing component: constructor-season effect " + e.constructor + "," +
                        std::to_string(e.season));
  using namespace inference_detail;
  auto v = add(driver_effect(draws, ctx.spec, e.driver, when),
               draws.pooled(draws.require_column("theta_ds[" + season_key(e.driver, e.season) + "]")));
  v = add(std::move(v), team_effect(draws, ctx.spec, e.constructor, when));
  return add(std::move(v),
             draws.pooled(draws.require_column("theta_ts[" + season_key(e.constructor, e.season) + "]")));
}

/// Posterior of the head-to-head win probability of entrant a over entrant b.
inline CounterfactualResult counterfactual_win_prob(const PosteriorDraws& draws, const FitContext& ctx,
                                                    const Entrant& a, const Entrant& b,
                                                    RaceConditions when = {}) {
  CounterfactualResult r{a, b, {}, {}};
  const auto ta = entrant_ability(draws, ctx, a, when);
  const auto tb = entrant_ability(draws, ctx, b, when);
  r.draws.resize(ta.size());
  for (std::size_t i = 0; i < ta.size(); ++i) r.draws[i] = win_probability(ta[i], tb[i]);
  r.summary = summarize_values(a.label() + ">" + b.label(), r.draws);
  return r;
}

}  // namespace f1rank
