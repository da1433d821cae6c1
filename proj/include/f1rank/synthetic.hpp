#pragma once

// Simulated championships drawn from the additive ability model, with the
// true effects kept under the names the fitted model uses.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "f1rank/data.hpp"
#include "f1rank/rol.hpp"

namespace f1rank::synthetic {

struct Settings {
  int first_season = 2014;
  int seasons = 3;
  int races_per_season = 5;
  int teams = 4;             // two seats each
  int driver_pool = 12;
  double seat_change = 0.35;  // per seat and season
  double sigma_t = 1.6, sigma_ts = 0.7, sigma_d = 0.55, sigma_ds = 0.35;
  double wet_share = 0.12, street_share = 0.2;
  // Optional covariate slopes (0 disables).
  double sigma_wet = 0.0, sigma_perm = 0.0;
  unsigned long long seed = 1;
};

struct Championship {
  f1rank::Dataset data;
  std::map<std::string, double> truth;  // theta_d[..], theta_ds[..,year], theta_t[..], theta_ts[..], sigma_*
};

inline std::string driver_id(int i) { return "d" + std::string(i < 10 ? "0" : "") + std::to_string(i); }
inline std::string team_id(int i) { return "t" + std::string(i < 10 ? "0" : "") + std::to_string(i); }

inline Championship simulate(const Settings& s) {
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Championship out;
  auto& truth = out.truth;
  truth["sigma_t"] = s.sigma_t, truth["sigma_ts"] = s.sigma_ts;
  truth["sigma_d"] = s.sigma_d, truth["sigma_ds"] = s.sigma_ds;

  std::vector<double> theta_d(s.driver_pool), theta_t(s.teams), wet(s.driver_pool), perm(s.teams);
  for (int d = 0; d < s.driver_pool; ++d) {
    theta_d[d] = s.sigma_d * normal(rng);
    wet[d] = s.sigma_wet * normal(rng);
    truth["theta_d[" + driver_id(d) + "]"] = theta_d[d];
    if (s.sigma_wet > 0) truth["gamma1d[" + driver_id(d) + "]"] = wet[d];
  }
  for (int t = 0; t < s.teams; ++t) {
    theta_t[t] = s.sigma_t * normal(rng);
    perm[t] = s.sigma_perm * normal(rng);
    truth["theta_t[" + team_id(t) + "]"] = theta_t[t];
    if (s.sigma_perm > 0) truth["gamma1t[" + team_id(t) + "]"] = perm[t];
  }

  const int seats = 2 * s.teams;
  std::vector<int> lineup(seats);
  for (int k = 0; k < seats; ++k) lineup[k] = k;
  std::size_t row = 0;
  for (int season = 0; season < s.seasons; ++season) {
    const int year = s.first_season + season;
    if (season > 0) {
      for (int k = 0; k < seats; ++k) {
        if (unit(rng) >= s.seat_change) continue;
        const int incoming = static_cast<int>(unit(rng) * s.driver_pool);
        auto it = std::find(lineup.begin(), lineup.end(), incoming);
        if (it != lineup.end()) *it = lineup[k];
        lineup[k] = incoming;
      }
    }
    std::vector<double> ds(s.driver_pool, 0.0), ts(s.teams);
    for (int k = 0; k < seats; ++k) {
      ds[lineup[k]] = s.sigma_ds * normal(rng);
      truth["theta_ds[" + driver_id(lineup[k]) + "," + std::to_string(year) + "]"] = ds[lineup[k]];
    }
    for (int t = 0; t < s.teams; ++t) {
      ts[t] = s.sigma_ts * normal(rng);
      truth["theta_ts[" + team_id(t) + "," + std::to_string(year) + "]"] = ts[t];
    }
    for (int round = 1; round <= s.races_per_season; ++round) {
      const bool is_wet = unit(rng) < s.wet_share;
      const bool is_street = unit(rng) < s.street_share;
      std::vector<double> ability(seats);
      for (int k = 0; k < seats; ++k) {
        const int d = lineup[k], t = k / 2;
        ability[k] = theta_d[d] + ds[d] + theta_t[t] + ts[t];
        if (is_wet) ability[k] += wet[d];
        if (!is_street) ability[k] += perm[t];
      }
      const auto order = f1rank::sample_ranking(ability, rng);
      for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const int k = static_cast<int>(order[pos]);
        f1rank::RaceRecord r;
        r.season = year;
        r.round = round;
        r.driver_id = driver_id(lineup[k]);
        r.constructor_id = team_id(k / 2);
        r.finish_position = static_cast<int>(pos + 1);
        r.status = "Finished";
        r.laps = 50;
        r.wet_race = is_wet;
        r.permanent_circuit = !is_street;
        r.source_row = ++row;
        out.data.rows.push_back(r);
      }
    }
  }
  return out;
}

/// Renders a dataset in the default input layout.
inline std::string to_csv(const f1rank::Dataset& data) {
  std::string s = "season,round,driver_id,constructor_id,position,status,laps,wet,circuit_type\n";
  for (const auto& r : data.rows) {
    s += std::to_string(r.season) + "," + std::to_string(r.round) + "," + r.driver_id + "," + r.constructor_id +
         "," + (r.finish_position ? std::to_string(*r.finish_position) : std::string()) + "," + r.status + "," +
         std::to_string(r.laps) + "," + (r.wet_race ? "1" : "0") + "," +
         (r.permanent_circuit ? "permanent" : "street") + "\n";
  }
  return s;
}

}  // namespace f1rank::synthetic
