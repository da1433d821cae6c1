#pragma once

// End-to-end steps shared by the command-line tool and the acceptance suite:
// load and filter data, fit, and turn analysis results into report tables.

#include <algorithm>
#include <string>
#include <tuple>
#include <vector>

#include "f1rank/data.hpp"
#include "f1rank/diagnostics.hpp"
#include "f1rank/inference.hpp"
#include "f1rank/io.hpp"
#include "f1rank/model.hpp"
#include "f1rank/nuts.hpp"
#include "f1rank/psis.hpp"

namespace f1rank {

struct PreparedData {
  Dataset retained;
  CompetitorIndex index;
  std::vector<RankOutcome> outcomes;
  std::vector<std::string> warnings;
};

inline PreparedData prepare(const Dataset& raw, FilterRegime regime) {
  PreparedData p;
  p.retained = apply_filter(raw, regime);
  if (p.retained.rows.empty()) throw DataError("no rows survive the '" + std::string(to_string(regime)) + "' filter");
  p.index = build_index(p.retained);
  p.outcomes = build_outcomes(p.retained, p.index, &p.warnings);
  if (p.outcomes.empty()) throw DataError("no race has two or more retained competitors");
  return p;
}

inline PreparedData prepare(const RunConfig& config) {
  if (config.data_path.empty()) throw ConfigError("no data file given (use --data or the config 'data' key)");
  return prepare(parse_results(config.data_path, config.schema), config.spec.filter_regime);
}

/// Fits the configured model to already prepared data.
inline FitResult fit_prepared(const RunConfig& config, PreparedData data) {
  FitResult fit;
  fit.config = config;
  fit.hash = config_hash(config);
  fit.warnings = std::move(data.warnings);
  fit.context.spec = config.spec;
  fit.context.index = data.index;
  fit.context.outcomes = data.outcomes;
  fit.retained = std::move(data.retained);
  const Model model(config.spec, std::move(data.index), std::move(data.outcomes));
  fit.draws = nuts_sample(model, config.sampler);
  for (std::size_t r = 0; r < model.outcomes().size(); ++r)
    fit.draws.pointwise_labels[r] = model.outcomes()[r].label();
  return fit;
}

inline FitResult run_fit(const RunConfig& config) { return fit_prepared(config, prepare(config)); }

/// True when two fits were made on the same retained rows, so their
/// per-race likelihoods are comparable.
inline bool same_corpus(const Dataset& a, const Dataset& b) {
  auto key = [](const RaceRecord& r) {
    return std::tie(r.season, r.round, r.driver_id, r.constructor_id, r.finish_position, r.status);
  };
  return std::equal(a.rows.begin(), a.rows.end(), b.rows.begin(), b.rows.end(),
                    [&](const RaceRecord& x, const RaceRecord& y) { return key(x) == key(y); });
}

/// Largest R-hat over all recorded columns, ignoring constant columns.
inline double max_rhat(const std::vector<ParameterDiagnostics>& diagnostics) {
  double worst = 1.0;
  for (const auto& d : diagnostics)
    if (!d.rhat.degenerate) worst = std::max(worst, d.rhat.value);
  return worst;
}

// Report tables.

inline Table summary_table(const std::vector<Summary>& summaries, const std::string& first = "parameter") {
  Table t{{first, "mean", "sd", "lower_5.5", "upper_94.5"}, {}};
  for (const auto& s : summaries)
    t.rows.push_back({s.name, format_number(s.mean), format_number(s.sd), format_number(s.lower),
                      format_number(s.upper)});
  return t;
}

inline Table ranking_table(const std::vector<Summary>& ranking, const std::string& entity) {
  Table t{{"rank", entity, "mean", "sd", "lower_5.5", "upper_94.5"}, {}};
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& s = ranking[i];
    t.rows.push_back({std::to_string(i + 1), s.name, format_number(s.mean), format_number(s.sd),
                      format_number(s.lower), format_number(s.upper)});
  }
  return t;
}

inline Table trajectory_table(const Trajectory& tr, const std::string& entity) {
  Table t{{entity, "season", "mean", "sd", "lower_5.5", "upper_94.5"}, {}};
  for (const auto& p : tr.points)
    t.rows.push_back({p.entity, std::to_string(p.season), format_number(p.summary.mean),
                      format_number(p.summary.sd), format_number(p.summary.lower),
                      format_number(p.summary.upper)});
  return t;
}

inline Table diagnostics_table(const std::vector<ParameterDiagnostics>& diagnostics) {
  Table t{{"parameter", "rhat", "ess_bulk", "degenerate"}, {}};
  for (const auto& d : diagnostics)
    t.rows.push_back({d.name, format_number(d.rhat.value), format_number(d.ess.value),
                      d.rhat.degenerate || d.ess.degenerate ? "1" : "0"});
  return t;
}

inline Table decomposition_table(const DecompositionReport& r) {
  return summary_table({r.constructor_variance, r.constructor_season_variance, r.driver_variance,
                        r.driver_season_variance, r.constructor_share, r.driver_share},
                       "quantity");
}

inline Table season_points_table(const SeasonPointsReport& r) {
  Table t{{"driver", "constructor", "races_finished", "expected_points_per_race", "lower_5.5", "upper_94.5",
           "observed_points_per_race"},
          {}};
  for (const auto& e : r.entries)
    t.rows.push_back({e.driver, e.constructor, std::to_string(e.races), format_number(e.expected.mean, 4),
                      format_number(e.expected.lower, 4), format_number(e.expected.upper, 4),
                      format_number(e.observed, 4)});
  return t;
}

inline Table ppc_table(const PpcReport& r) {
  Table t{{"driver", "constructor", "races", "position", "simulated_share", "observed_share"}, {}};
  for (const auto& e : r.entries)
    for (std::size_t p = 0; p < e.simulated.size(); ++p)
      t.rows.push_back({e.driver, e.constructor, std::to_string(e.races), std::to_string(p + 1),
                        format_number(e.simulated[p]), format_number(e.observed[p])});
  return t;
}

inline Table ppc_mean_table(const PpcReport& r) {
  Table t{{"driver", "constructor", "races", "simulated_mean_position", "observed_mean_position"}, {}};
  for (const auto& e : r.entries)
    t.rows.push_back({e.driver, e.constructor, std::to_string(e.races), format_number(e.simulated_mean),
                      format_number(e.observed_mean)});
  return t;
}

inline Table counterfactual_table(const CounterfactualResult& r) {
  Table t{{"entrant_a", "entrant_b", "mean", "sd", "lower_5.5", "upper_94.5"}, {}};
  t.rows.push_back({r.a.label(), r.b.label(), format_number(r.summary.mean), format_number(r.summary.sd),
                    format_number(r.summary.lower), format_number(r.summary.upper)});
  return t;
}

inline Table elpd_table(const std::vector<ElpdReport>& reports) {
  Table t{{"model", "elpd_loo", "se_elpd", "delta", "se_delta", "p_loo", "high_pareto_k"}, {}};
  for (const auto& r : reports)
    t.rows.push_back({r.label, format_number(r.elpd_loo, 8), format_number(r.se_elpd, 6),
                      format_number(r.delta, 6), format_number(r.se_delta, 6), format_number(r.p_loo, 6),
                      std::to_string(r.high_k_count)});
  return t;
}

}  // namespace f1rank
