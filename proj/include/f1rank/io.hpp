#pragma once

// Run configuration and fit persistence. A fit directory holds
//   fit.json         config, config hash, retained rows, sampler state
//   draws.csv        chain,iteration,<output names>
//   loglik.csv       chain,iteration,<race labels>
//   sampler.csv      per-iteration sampler statistics
//   diagnostics.csv  R-hat and bulk ESS per output column
// CSV files start with '#' provenance lines. Reports rebuild everything from
// these files and never touch the raw results file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "f1rank/data.hpp"
#include "f1rank/diagnostics.hpp"
#include "f1rank/draws.hpp"
#include "f1rank/error.hpp"
#include "f1rank/inference.hpp"
#include "f1rank/model.hpp"
#include "f1rank/nuts.hpp"

namespace f1rank {

using nlohmann::json;

struct RunConfig {
  std::string data_path;
  ColumnSchema schema;
  ModelSpec spec;
  SamplerConfig sampler;
  std::string out_dir = "f1rank-out";
  PointsTable points = default_points_table();
};

inline json to_json(const ColumnSchema& s) {
  json j = {{"season", s.season}, {"round", s.round},     {"driver", s.driver},
            {"constructor", s.constructor}, {"position", s.position}, {"status", s.status},
            {"laps", s.laps},     {"wet", s.wet},         {"circuit", s.circuit}};
  j["first_season"] = s.first_season ? json(*s.first_season) : json(nullptr);
  j["last_season"] = s.last_season ? json(*s.last_season) : json(nullptr);
  return j;
}

inline json to_json(const ModelSpec& s) {
  return {{"model", s.covariate_label()},
          {"dynamics", std::string(to_string(s.dynamics))},
          {"filter", std::string(to_string(s.filter_regime))},
          {"prior_scale_sigma", s.prior_scale_sigma},
          {"prior_df_sigma", s.prior_df_sigma},
          {"ar1_teams", s.ar1_teams}};
}

inline json to_json(const SamplerConfig& s) {
  return {{"chains", s.chains},
          {"warmup", s.warmup_iterations},
          {"samples", s.sampling_iterations},
          {"seed", s.seed},
          {"target_acceptance", s.target_acceptance},
          {"max_tree_depth", s.max_tree_depth},
          {"init_radius", s.init_radius},
          {"threads", s.threads},
          {"init_buffer", s.init_buffer},
          {"base_window", s.base_window},
          {"term_buffer", s.term_buffer}};
}

inline json to_json(const RunConfig& c) {
  return {{"data", c.data_path},          {"schema", to_json(c.schema)},
          {"model", to_json(c.spec)},      {"sampler", to_json(c.sampler)},
          {"out", c.out_dir},              {"points", c.points}};
}

namespace io_detail {

inline void check_keys(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(std::string("unknown config key '") + section + "." + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void read_optional_int(const json& j, const char* key, std::optional<int>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  int v = 0;
  read(j, key, v);
  out = v;
}

}  // namespace io_detail

/// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
inline RunConfig run_config_from_json(const json& j, RunConfig base = {}) {
  using namespace io_detail;
  check_keys(j, "root", {"data", "schema", "model", "sampler", "out", "points"});
  read(j, "data", base.data_path);
  read(j, "out", base.out_dir);
  read(j, "points", base.points);
  if (j.contains("schema")) {
    const auto& s = j["schema"];
    check_keys(s, "schema", {"season", "round", "driver", "constructor", "position", "status", "laps",
                             "wet", "circuit", "first_season", "last_season"});
    auto& c = base.schema;
    read(s, "season", c.season), read(s, "round", c.round), read(s, "driver", c.driver);
    read(s, "constructor", c.constructor), read(s, "position", c.position);
    read(s, "status", c.status), read(s, "laps", c.laps), read(s, "wet", c.wet);
    read(s, "circuit", c.circuit);
    read_optional_int(s, "first_season", c.first_season);
    read_optional_int(s, "last_season", c.last_season);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"model", "dynamics", "filter", "prior_scale_sigma", "prior_df_sigma", "ar1_teams"});
    std::string text;
    if (m.contains("model")) read(m, "model", text), apply_model_name(base.spec, text);
    if (m.contains("dynamics")) read(m, "dynamics", text), base.spec.dynamics = parse_dynamics(text);
    if (m.contains("filter")) {
      read(m, "filter", text);
      base.spec.filter_regime = parse_filter_regime(text);
    }
    read(m, "prior_scale_sigma", base.spec.prior_scale_sigma);
    read(m, "prior_df_sigma", base.spec.prior_df_sigma);
    read(m, "ar1_teams", base.spec.ar1_teams);
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, "sampler", {"chains", "warmup", "samples", "seed", "target_acceptance", "max_tree_depth",
                              "init_radius", "threads", "init_buffer", "base_window", "term_buffer"});
    auto& c = base.sampler;
    read(s, "chains", c.chains), read(s, "warmup", c.warmup_iterations);
    read(s, "samples", c.sampling_iterations), read(s, "seed", c.seed);
    read(s, "target_acceptance", c.target_acceptance), read(s, "max_tree_depth", c.max_tree_depth);
    read(s, "init_radius", c.init_radius), read(s, "threads", c.threads);
    read(s, "init_buffer", c.init_buffer), read(s, "base_window", c.base_window);
    read(s, "term_buffer", c.term_buffer);
  }
  return base;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

/// 64-bit FNV-1a over the compact serialized config, as 16 hex digits.
/// Output location and thread count do not affect results and are left out.
inline std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out");
  j["sampler"].erase("threads");
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

/// Everything a fit produces.
struct FitResult {
  RunConfig config;
  std::string hash;
  Dataset retained;  // filtered rows the model was fitted to
  FitContext context;
  PosteriorDraws draws;
  std::vector<std::string> warnings;
};

/// Provenance stamped on every persisted table.
struct Provenance {
  std::string config_hash;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t chains = 0;
  std::size_t iterations = 0;

  static Provenance of(const FitResult& f) {
    return {f.hash, f.context.spec.label(), f.config.sampler.seed, f.draws.chains, f.draws.iterations};
  }

  json to_json() const {
    return {{"config_hash", config_hash}, {"model", model},           {"seed", seed},
            {"chains", chains},           {"iterations", iterations}, {"draws", chains * iterations}};
  }

  void write_comments(std::ostream& out) const {
    out << "# config_hash=" << config_hash << "\n# model=" << model << "\n# seed=" << seed
        << "\n# chains=" << chains << "\n# iterations=" << iterations
        << "\n# draws=" << chains * iterations << '\n';
  }
};

namespace io_detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw AnalysisError("cannot write '" + p.string() + "'");
  out << std::setprecision(17);
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw AnalysisError("cannot read '" + p.string() + "'");
  return in;
}

inline json record_to_json(const RaceRecord& r) {
  return {{"season", r.season},
          {"round", r.round},
          {"driver", r.driver_id},
          {"constructor", r.constructor_id},
          {"position", r.finish_position ? json(*r.finish_position) : json(nullptr)},
          {"status", r.status},
          {"laps", r.laps},
          {"wet", r.wet_race},
          {"permanent", r.permanent_circuit},
          {"row", r.source_row}};
}

inline RaceRecord record_from_json(const json& j) {
  RaceRecord r;
  r.season = j.at("season");
  r.round = j.at("round");
  r.driver_id = j.at("driver");
  r.constructor_id = j.at("constructor");
  if (!j.at("position").is_null()) r.finish_position = j.at("position").get<int>();
  r.status = j.at("status");
  r.laps = j.at("laps");
  r.wet_race = j.at("wet");
  r.permanent_circuit = j.at("permanent");
  r.source_row = j.at("row");
  return r;
}

/// Reads a CSV that starts with '#' comment lines; returns the header and
/// checks the recorded config hash.
inline std::vector<std::string> read_header(std::istream& in, const std::string& hash,
                                            const std::string& file) {
  std::string line;
  bool saw_hash = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] != '#') break;
    const std::string key = "# config_hash=";
    if (line.rfind(key, 0) == 0) {
      saw_hash = true;
      if (line.substr(key.size()) != hash)
        throw AnalysisError(file + " was written by a different config (hash mismatch)");
    }
  }
  if (!saw_hash) throw AnalysisError(file + " carries no config hash");
  return detail::split_csv_line(line);
}

inline std::vector<double> parse_doubles(const std::string& line, std::size_t expected,
                                         const std::string& file) {
  std::vector<double> v;
  v.reserve(expected);
  const char* p = line.c_str();
  char* end = nullptr;
  while (*p) {
    v.push_back(std::strtod(p, &end));
    if (end == p) throw AnalysisError("malformed number in " + file);
    p = end;
    if (*p == ',') ++p;
  }
  if (v.size() != expected) throw AnalysisError("wrong column count in " + file);
  return v;
}

}  // namespace io_detail

inline void write_fit(const std::filesystem::path& dir, const FitResult& fit,
                      const std::vector<ParameterDiagnostics>& diagnostics) {
  using namespace io_detail;
  std::filesystem::create_directories(dir);
  const auto prov = Provenance::of(fit);
  const auto& d = fit.draws;

  json meta;
  meta["config"] = to_json(fit.config);
  meta["config_hash"] = fit.hash;
  meta["model"] = fit.context.spec.label();
  meta["warnings"] = fit.warnings;
  json rows = json::array();
  for (const auto& r : fit.retained.rows) rows.push_back(record_to_json(r));
  meta["retained_rows"] = std::move(rows);
  meta["parameter_count"] = d.parameter_count;
  meta["chains"] = d.chains;
  meta["iterations"] = d.iterations;
  meta["divergences"] = d.divergence_count();
  json adapt = json::array();
  for (const auto& a : d.adaptation)
    adapt.push_back({{"step_size", a.step_size}, {"inverse_metric", a.inverse_metric}});
  meta["adaptation"] = std::move(adapt);
  {
    auto out = open_out(dir / "fit.json");
    out << meta.dump(1) << '\n';
  }

  auto write_matrix = [&](const char* file, const std::vector<std::string>& header,
                          const std::vector<double>& values) {
    auto out = open_out(dir / file);
    prov.write_comments(out);
    out << "chain,iteration";
    for (const auto& h : header) out << ',' << (h.find(',') != std::string::npos ? '"' + h + '"' : h);
    out << '\n';
    const std::size_t width = header.size();
    for (std::size_t c = 0; c < d.chains; ++c)
      for (std::size_t i = 0; i < d.iterations; ++i) {
        out << c + 1 << ',' << i + 1;
        const std::size_t row = (c * d.iterations + i) * width;
        for (std::size_t k = 0; k < width; ++k) out << ',' << values[row + k];
        out << '\n';
      }
  };
  write_matrix("draws.csv", d.names, d.values);
  write_matrix("loglik.csv", d.pointwise_labels, d.per_race_loglik);

  {
    auto out = open_out(dir / "sampler.csv");
    prov.write_comments(out);
    out << "chain,iteration,lp,accept_stat,tree_depth,divergent\n";
    for (std::size_t c = 0; c < d.chains; ++c)
      for (std::size_t i = 0; i < d.iterations; ++i) {
        const std::size_t k = c * d.iterations + i;
        out << c + 1 << ',' << i + 1 << ',' << d.log_density[k] << ',' << d.accept_stat[k] << ','
            << d.tree_depth[k] << ',' << int(d.divergent[k]) << '\n';
      }
  }
  {
    auto out = open_out(dir / "diagnostics.csv");
    prov.write_comments(out);
    out << "parameter,rhat,ess_bulk,degenerate\n";
    for (const auto& p : diagnostics) {
      out << '"' << p.name << "\"," << p.rhat.value << ',' << p.ess.value << ','
          << (p.rhat.degenerate || p.ess.degenerate ? 1 : 0) << '\n';
    }
  }
}

/// Reloads a fit directory, rebuilding the index and outcomes from the
/// retained rows and checking every file against the recorded config hash.
inline FitResult read_fit(const std::filesystem::path& dir) {
  using namespace io_detail;
  if (!std::filesystem::exists(dir / "fit.json"))
    throw AnalysisError("no fit found in '" + dir.string() + "' (missing fit.json)");
  json meta;
  {
    auto in = open_in(dir / "fit.json");
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw AnalysisError("fit.json is not valid JSON: " + std::string(e.what()));
    }
  }
  FitResult fit;
  try {
    fit.config = run_config_from_json(meta.at("config"));
    fit.hash = meta.at("config_hash");
    for (const auto& r : meta.at("retained_rows")) fit.retained.rows.push_back(record_from_json(r));
    fit.warnings = meta.at("warnings").get<std::vector<std::string>>();
    fit.draws.chains = meta.at("chains");
    fit.draws.iterations = meta.at("iterations");
    fit.draws.parameter_count = meta.at("parameter_count");
    for (const auto& a : meta.at("adaptation"))
      fit.draws.adaptation.push_back({a.at("step_size"), a.at("inverse_metric").get<std::vector<double>>()});
  } catch (const json::exception& e) {
    throw AnalysisError("fit.json is incomplete: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw AnalysisError("fit.json holds an invalid config: " + std::string(e.what()));
  }
  if (config_hash(fit.config) != fit.hash)
    throw AnalysisError("fit.json config does not match its recorded hash");

  fit.context.spec = fit.config.spec;
  fit.context.index = build_index(fit.retained);
  fit.context.outcomes = build_outcomes(fit.retained, fit.context.index);

  auto& d = fit.draws;
  const std::size_t total = d.draw_count();
  auto read_matrix = [&](const char* file, std::vector<std::string>& names, std::vector<double>& values) {
    auto in = open_in(dir / file);
    auto header = read_header(in, fit.hash, file);
    if (header.size() < 2 || header[0] != "chain" || header[1] != "iteration")
      throw AnalysisError(std::string(file) + " has an unexpected header");
    names.assign(header.begin() + 2, header.end());
    values.reserve(total * names.size());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto v = parse_doubles(line, names.size() + 2, file);
      values.insert(values.end(), v.begin() + 2, v.end());
      ++rows;
    }
    if (rows != total) throw AnalysisError(std::string(file) + " holds the wrong number of draws");
  };
  read_matrix("draws.csv", d.names, d.values);
  read_matrix("loglik.csv", d.pointwise_labels, d.per_race_loglik);
  if (d.pointwise_labels.size() != fit.context.outcomes.size())
    throw AnalysisError("loglik.csv races do not match the retained rows");
  for (std::size_t r = 0; r < fit.context.outcomes.size(); ++r)
    if (d.pointwise_labels[r] != fit.context.outcomes[r].label())
      throw AnalysisError("loglik.csv races do not match the retained rows");

  {
    auto in = open_in(dir / "sampler.csv");
    read_header(in, fit.hash, "sampler.csv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto v = parse_doubles(line, 6, "sampler.csv");
      d.log_density.push_back(v[2]);
      d.accept_stat.push_back(v[3]);
      d.tree_depth.push_back(static_cast<int>(v[4]));
      d.divergent.push_back(static_cast<std::uint8_t>(v[5]));
    }
    if (d.log_density.size() != total) throw AnalysisError("sampler.csv holds the wrong number of draws");
  }
  return fit;
}

/// A report table: header plus string cells.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline std::string format_number(double v, int digits = 6) {
  std::ostringstream out;
  out << std::setprecision(digits) << v;
  return out.str();
}

namespace io_detail {

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace io_detail

inline void write_table(std::ostream& out, const Provenance& prov, const Table& t) {
  prov.write_comments(out);
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    out << (i ? "," : "") << io_detail::csv_cell(t.columns[i]);
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << io_detail::csv_cell(row[i]);
    out << '\n';
  }
}

inline json table_json(const Provenance& prov, const Table& t, const json& extra = json::object()) {
  json j = {{"provenance", prov.to_json()}, {"columns", t.columns}, {"rows", t.rows}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

/// Writes `<stem>.csv` and its `<stem>.json` twin.
inline void write_report(const std::filesystem::path& dir, const std::string& stem, const Provenance& prov,
                         const Table& t, const json& extra = json::object()) {
  std::filesystem::create_directories(dir);
  {
    auto out = io_detail::open_out(dir / (stem + ".csv"));
    write_table(out, prov, t);
  }
  auto out = io_detail::open_out(dir / (stem + ".json"));
  out << table_json(prov, t, extra).dump(1) << '\n';
}

}  // namespace f1rank
