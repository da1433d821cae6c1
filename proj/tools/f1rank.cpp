#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "f1rank/oracle.hpp"
#include "f1rank/pipeline.hpp"

namespace fs = std::filesystem;
using namespace f1rank;

namespace {

constexpr int kExitOther = 1, kExitConfig = 2, kExitData = 3, kExitConvergence = 4, kExitAnalysis = 5;
constexpr double kRhatThreshold = 1.01;

const std::vector<std::string> kSelections = {"rank",           "trajectory",     "advantage", "decompose",
                                              "simulate-season", "counterfactual", "ppc",       "trace"};

struct RunFlags {
  std::string config;
  std::optional<std::string> data, out, filter, model, dynamics;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> chains, warmup, samples, threads;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (flags override it)");
    app->add_option("--data", data, "race results CSV");
    app->add_option("--out", out, "output directory");
    app->add_option("--filter", filter, "all | no-car | no-driver | finishers");
    app->add_option("--model", model, "basic | weather | circuit | both");
    app->add_option("--dynamics", dynamics, "iid | ar1 | slope");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--chains", chains, "number of chains");
    app->add_option("--warmup", warmup, "warmup iterations per chain");
    app->add_option("--samples", samples, "retained iterations per chain");
    app->add_option("--threads", threads, "worker threads (0 = hardware concurrency)");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config.empty()) cfg = load_run_config(config, cfg);
    if (data) cfg.data_path = *data;
    if (out) cfg.out_dir = *out;
    if (filter) cfg.spec.filter_regime = parse_filter_regime(*filter);
    if (model) apply_model_name(cfg.spec, *model);
    if (dynamics) cfg.spec.dynamics = parse_dynamics(*dynamics);
    if (seed) cfg.sampler.seed = *seed;
    if (chains) cfg.sampler.chains = *chains;
    if (warmup) cfg.sampler.warmup_iterations = *warmup;
    if (samples) cfg.sampler.sampling_iterations = *samples;
    if (threads) cfg.sampler.threads = *threads;
    return cfg;
  }
};

void print_table(const Table& t) {
  std::ostringstream file;
  write_table(file, Provenance{}, t);
  std::istringstream in(file.str());
  std::string line;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') std::cout << line << '\n';
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> parse_seasons(const std::string& text, const FitContext& ctx) {
  if (text.empty()) return ctx.index.seasons();
  std::vector<int> out;
  for (const auto& s : split_list(text)) {
    auto v = detail::parse_int(s);
    if (!v) throw ConfigError("season must be a year, got '" + s + "'");
    out.push_back(*v);
  }
  return out;
}

int cmd_ingest(const RunFlags& flags) {
  const auto cfg = flags.resolve();
  if (cfg.data_path.empty()) throw ConfigError("no data file given (use --data or the config 'data' key)");
  const auto raw = parse_results(cfg.data_path, cfg.schema);
  const auto data = prepare(raw, cfg.spec.filter_regime);
  print_warnings(data.warnings);
  const auto raw_counts = count(raw), kept = count(data.retained);
  std::ostringstream report;
  report << "filter=" << to_string(cfg.spec.filter_regime) << "\n"
         << "rows_read=" << raw_counts.rows << "\n"
         << "rows_retained=" << kept.rows << "\n"
         << format_corpus_report(summarize_corpus(data.outcomes, data.index));
  std::cout << report.str();
  if (flags.out) {
    fs::create_directories(*flags.out);
    std::ofstream(fs::path(*flags.out) / "corpus.txt") << report.str();
  }
  return 0;
}

int fit_and_write(const RunConfig& cfg, bool allow_nonconverged) {
  auto fit = run_fit(cfg);
  print_warnings(fit.warnings);
  const auto diagnostics = diagnose(fit.draws);
  write_fit(cfg.out_dir, fit, diagnostics);
  const double worst = max_rhat(diagnostics);
  const std::size_t divergent = fit.draws.divergence_count();
  std::cout << "model=" << cfg.spec.label() << " config_hash=" << fit.hash << "\n"
            << "chains=" << fit.draws.chains << " iterations=" << fit.draws.iterations
            << " parameters=" << fit.draws.parameter_count << "\n"
            << "divergences=" << divergent << "\n"
            << "max_rhat=" << format_number(worst) << "\n"
            << "wrote " << cfg.out_dir << "\n";
  if (divergent * 10 > fit.draws.draw_count())
    std::cerr << "WARNING: " << divergent << " divergent transitions (more than 10% of draws)\n";
  if (worst >= kRhatThreshold) {
    std::cerr << (allow_nonconverged ? "warning: " : "error: ") << "max R-hat " << format_number(worst)
              << " is not below " << kRhatThreshold << '\n';
    if (!allow_nonconverged) return kExitConvergence;
  }
  return 0;
}

int cmd_compare(const RunFlags& flags, std::vector<std::string> fits, const std::string& models,
                bool allow_nonconverged) {
  const auto base = flags.resolve();
  int status = 0;
  if (!models.empty()) {
    for (const auto& m : split_list(models)) {
      RunConfig cfg = base;
      ModelSpec spec;
      apply_model_name(spec, m);
      cfg.spec.wet_slope = spec.wet_slope;
      cfg.spec.circuit_slope = spec.circuit_slope;
      cfg.out_dir = (fs::path(base.out_dir) / m).string();
      std::cout << "fitting " << m << '\n';
      const int rc = fit_and_write(cfg, allow_nonconverged);
      if (rc != 0) status = rc;
      fits.push_back(cfg.out_dir);
    }
  }
  if (fits.size() < 2) throw AnalysisError("model comparison needs at least two fits");
  std::vector<std::pair<std::string, LogLikMatrix>> matrices;
  Dataset first;
  for (const auto& dir : fits) {
    const auto fit = read_fit(dir);
    if (matrices.empty()) {
      first = fit.retained;
    } else if (!same_corpus(first, fit.retained)) {
      throw AnalysisError("fit '" + dir + "' was made on a different corpus than '" + fits.front() + "'");
    }
    auto label = fit.context.spec.label();
    for (const auto& [existing, _] : matrices)
      if (existing == label) label += "@" + dir;
    matrices.emplace_back(label, LogLikMatrix::from_draws(fit.draws));
  }
  const auto reports = psis_loo(matrices);
  const auto table = elpd_table(reports);
  print_table(table);
  for (const auto& r : reports)
    if (r.high_k_count > 0)
      std::cerr << "warning: " << r.label << " has " << r.high_k_count << " races with Pareto k > 0.7\n";
  Provenance prov;
  prov.config_hash = config_hash(base);
  prov.model = "comparison";
  prov.seed = base.sampler.seed;
  write_report(base.out_dir, "compare", prov, table);
  return status;
}

struct ReportFlags {
  std::string fit_dir, out, season, drivers, teams, seasons, a, b, params, points;
  bool wet = false, street = false;
  std::uint64_t seed = 1;
  std::size_t max_draws = 0;
};

int cmd_report(const std::string& selection, const ReportFlags& f) {
  bool known = false;
  for (const auto& s : kSelections) known = known || s == selection;
  if (!known) {
    std::string options;
    for (const auto& s : kSelections) options += (options.empty() ? "" : ", ") + s;
    throw ConfigError("unknown report selection '" + selection + "'; valid options: " + options);
  }
  if (f.fit_dir.empty()) throw ConfigError("report needs --fit DIR");
  const auto fit = read_fit(f.fit_dir);
  const auto& ctx = fit.context;
  const auto& draws = fit.draws;
  const fs::path out = f.out.empty() ? fs::path(f.fit_dir) / "report" : fs::path(f.out);
  const auto prov = Provenance::of(fit);
  const RaceConditions when{f.wet, !f.street};
  std::mt19937_64 rng(f.seed);
  auto season = [&]() {
    if (f.season.empty()) return ctx.index.seasons().back();
    auto v = detail::parse_int(f.season);
    if (!v) throw ConfigError("--season must be a year, got '" + f.season + "'");
    return *v;
  };
  auto emit = [&](const std::string& stem, const Table& t, const json& extra = json::object()) {
    write_report(out, stem, prov, t, extra);
    print_table(t);
    std::cerr << "wrote " << (out / (stem + ".csv")).string() << '\n';
  };
  auto notes = [](const std::vector<std::string>& n) {
    for (const auto& s : n) std::cerr << "note: " << s << '\n';
    return json{{"notes", n}};
  };

  if (selection == "rank") {
    const int year = season();
    emit("rank-drivers-" + std::to_string(year), ranking_table(driver_ranking(draws, ctx, year, when), "driver"));
    emit("rank-constructors", ranking_table(constructor_ranking(draws, ctx, when), "constructor"));
  } else if (selection == "trajectory") {
    auto ids = f.drivers.empty() ? ctx.index.drivers() : split_list(f.drivers);
    const auto tr = skill_trajectory(draws, ctx, ids, parse_seasons(f.seasons, ctx), when);
    emit("trajectory", trajectory_table(tr, "driver"), notes(tr.notes));
  } else if (selection == "advantage") {
    auto ids = f.teams.empty() ? ctx.index.constructors() : split_list(f.teams);
    const auto tr = advantage_trajectory(draws, ctx, ids, parse_seasons(f.seasons, ctx), when);
    emit("advantage", trajectory_table(tr, "constructor"), notes(tr.notes));
  } else if (selection == "decompose") {
    emit("decompose", decomposition_table(variance_decomposition(draws)));
  } else if (selection == "simulate-season") {
    PointsTable table = fit.config.points;
    if (!f.points.empty()) {
      table.clear();
      for (const auto& p : split_list(f.points)) {
        char* end = nullptr;
        const double v = std::strtod(p.c_str(), &end);
        if (end == p.c_str() || *end) throw ConfigError("--points must be comma-separated numbers");
        table.push_back(v);
      }
    }
    const int year = season();
    const auto r = simulate_season_points(draws, ctx, year, table, rng, f.max_draws);
    emit("simulate-season-" + std::to_string(year), season_points_table(r), notes(r.notes));
  } else if (selection == "counterfactual") {
    if (f.a.empty() || f.b.empty()) throw ConfigError("counterfactual needs --a and --b (driver:team:season)");
    emit("counterfactual", counterfactual_table(counterfactual_win_prob(draws, ctx, parse_entrant(f.a),
                                                                         parse_entrant(f.b), when)));
  } else if (selection == "ppc") {
    const int year = season();
    const auto r = posterior_predictive_check(draws, ctx, year, rng, f.max_draws ? f.max_draws : 500);
    write_report(out, "ppc-" + std::to_string(year), prov, ppc_table(r), {{"draws_used", r.draws_used}});
    emit("ppc-means-" + std::to_string(year), ppc_mean_table(r), {{"draws_used", r.draws_used}});
  } else if (selection == "trace") {
    const auto names =
        f.params.empty() ? std::vector<std::string>{"sigma_d", "sigma_ds", "sigma_t", "sigma_ts"} : split_list(f.params);
    fs::create_directories(out);
    const auto path = out / "trace.csv";
    {
      std::ofstream file(path);
      if (!file) throw AnalysisError("cannot write '" + path.string() + "'");
      prov.write_comments(file);
      trace_export(draws, names, file);
    }
    std::cerr << "wrote " << path.string() << '\n';
  }
  return 0;
}

int cmd_oracle(std::size_t vectors, std::size_t points, const std::string& data_path) {
  bool ok = true;
  const auto rol = oracle::check_rol(vectors);
  const bool rol_ok = rol.max_prob_error <= 1e-12 && rol.max_sum_error <= 1e-12 && rol.max_grad_error <= 1e-5;
  ok = ok && rol_ok;
  std::cout << (rol_ok ? "PASS" : "FAIL") << " rol: vectors=" << rol.vectors << " orderings=" << rol.orderings
            << " max_prob_error=" << rol.max_prob_error << " max_sum_error=" << rol.max_sum_error
            << " max_grad_error=" << rol.max_grad_error << '\n';
  const Dataset corpus = data_path.empty() ? oracle::gradient_corpus() : parse_results(data_path);
  for (const auto& g : oracle::check_gradients(corpus, points)) {
    const bool pass = g.max_relative_error < 1e-5;
    ok = ok && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " gradient " << g.variant << ": dimension=" << g.dimension
              << " points=" << g.points << " max_relative_error=" << g.max_relative_error << '\n';
  }
  return ok ? 0 : kExitOther;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::data: return kExitData;
    case ErrorKind::convergence: return kExitConvergence;
    case ErrorKind::analysis: return kExitAnalysis;
    case ErrorKind::model: return kExitOther;
  }
  return kExitOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian rank-ordered logit ratings of drivers and constructors"};
  app.require_subcommand(1);

  RunFlags ingest_flags, fit_flags, compare_flags;
  bool allow_nonconverged = false, compare_allow = false;
  std::vector<std::string> compare_fits;
  std::string compare_models;
  ReportFlags report;
  std::string selection;
  std::size_t oracle_vectors = 200, oracle_points = 50;
  std::string oracle_data;

  auto* ingest = app.add_subcommand("ingest", "parse, filter and summarize a results file");
  ingest_flags.attach(ingest);

  auto* fit = app.add_subcommand("fit", "fit a model and write draws and diagnostics");
  fit_flags.attach(fit);
  fit->add_flag("--allow-nonconverged", allow_nonconverged, "exit 0 even when R-hat >= 1.01");

  auto* compare = app.add_subcommand("compare", "PSIS-LOO comparison of fitted models");
  compare_flags.attach(compare);
  compare->add_option("fits", compare_fits, "fit directories");
  compare->add_option("--models", compare_models, "fit these models first, e.g. basic,weather,circuit,both");
  compare->add_flag("--allow-nonconverged", compare_allow, "continue when a fit has R-hat >= 1.01");

  auto* rep = app.add_subcommand("report", "analyses of a persisted fit");
  rep->add_option("selection", selection, "rank | trajectory | advantage | decompose | simulate-season | "
                                          "counterfactual | ppc | trace")
      ->required();
  rep->add_option("--fit", report.fit_dir, "fit directory")->required();
  rep->add_option("--out", report.out, "output directory (default: FIT/report)");
  rep->add_option("--season", report.season, "season for rank, simulate-season and ppc (default: last)");
  rep->add_option("--seasons", report.seasons, "comma-separated seasons for trajectories");
  rep->add_option("--drivers", report.drivers, "comma-separated driver ids");
  rep->add_option("--teams", report.teams, "comma-separated constructor ids");
  rep->add_option("--a", report.a, "entrant A as driver:team:season");
  rep->add_option("--b", report.b, "entrant B as driver:team:season");
  rep->add_option("--params", report.params, "comma-separated parameters for trace");
  rep->add_option("--points", report.points, "points by position, winner first");
  rep->add_option("--seed", report.seed, "seed for simulations");
  rep->add_option("--max-draws", report.max_draws, "thin simulations to about this many draws");
  rep->add_flag("--wet", report.wet, "evaluate abilities for a wet race");
  rep->add_flag("--street", report.street, "evaluate abilities for a street circuit");

  auto* orc = app.add_subcommand("oracle", "brute-force and finite-difference self checks");
  orc->add_option("--vectors", oracle_vectors, "random ability vectors");
  orc->add_option("--points", oracle_points, "random points per model variant");
  orc->add_option("--data", oracle_data, "results CSV for the gradient check (default: simulated)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_flags);
    if (fit->parsed()) return fit_and_write(fit_flags.resolve(), allow_nonconverged);
    if (compare->parsed()) return cmd_compare(compare_flags, compare_fits, compare_models, compare_allow);
    if (rep->parsed()) return cmd_report(selection, report);
    if (orc->parsed()) return cmd_oracle(oracle_vectors, oracle_points, oracle_data);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
