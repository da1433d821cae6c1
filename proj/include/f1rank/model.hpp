#pragma once

// Cross-classified multilevel rank-ordered logit model.
//
// Every competitor's ability is the sum of a driver effect, a driver-season
// effect, a constructor effect and a constructor-season effect, with optional
// wet-race (driver) and permanent-circuit (constructor) slopes. All effects
// are non-centred: each is a scale times a standard-normal coordinate, and
// scales live on the log scale, so the sampler sees an unconstrained vector.
//
// Coordinate blocks, in order:
//   driver | driver-season | constructor | constructor-season
//   | driver-wet | constructor-permanent
//   | log sigma_d, log sigma_ds, log sigma_t, log sigma_ts
//   | log sigma_wet | log sigma_perm | atanh phi_ds, atanh phi_ts
// Under the intercept-slope dynamics the two season blocks hold one slope
// per driver / constructor instead of one entry per observed season.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "f1rank/data.hpp"
#include "f1rank/error.hpp"
#include "f1rank/rol.hpp"

namespace f1rank {

enum class Dynamics { iid, ar1, intercept_slope };

inline std::string_view to_string(Dynamics d) {
  switch (d) {
    case Dynamics::iid: return "iid";
    case Dynamics::ar1: return "ar1";
    case Dynamics::intercept_slope: return "slope";
  }
  return "iid";
}

inline Dynamics parse_dynamics(std::string_view text) {
  if (text == "iid" || text == "iid-season-form") return Dynamics::iid;
  if (text == "ar1") return Dynamics::ar1;
  if (text == "slope" || text == "intercept-slope") return Dynamics::intercept_slope;
  throw ConfigError("unknown dynamics '" + std::string(text) + "' (expected iid, ar1 or slope)");
}

struct ModelSpec {
  bool wet_slope = false;
  bool circuit_slope = false;
  Dynamics dynamics = Dynamics::iid;
  /// Half-Student-t prior on every scale parameter.
  double prior_scale_sigma = 2.5;
  double prior_df_sigma = 3.0;
  /// Under AR(1) dynamics, also chain constructor-season effects.
  bool ar1_teams = true;
  FilterRegime filter_regime = FilterRegime::finishers_only;

  /// basic | weather | circuit | both
  std::string covariate_label() const {
    if (wet_slope && circuit_slope) return "both";
    if (wet_slope) return "weather";
    if (circuit_slope) return "circuit";
    return "basic";
  }

  std::string label() const {
    std::string l = covariate_label();
    if (dynamics != Dynamics::iid) l += "+" + std::string(to_string(dynamics));
    return l;
  }
};

inline void apply_model_name(ModelSpec& spec, std::string_view name) {
  if (name == "basic") {
    spec.wet_slope = false, spec.circuit_slope = false;
  } else if (name == "weather") {
    spec.wet_slope = true, spec.circuit_slope = false;
  } else if (name == "circuit") {
    spec.wet_slope = false, spec.circuit_slope = true;
  } else if (name == "both") {
    spec.wet_slope = true, spec.circuit_slope = true;
  } else {
    throw ConfigError("unknown model '" + std::string(name) +
                      "' (expected basic, weather, circuit or both)");
  }
}

struct ParameterLayout {
  static constexpr std::size_t absent = std::numeric_limits<std::size_t>::max();

  std::size_t driver = 0, driver_count = 0;
  std::size_t driver_season = 0, driver_season_count = 0;
  std::size_t team = 0, team_count = 0;
  std::size_t team_season = 0, team_season_count = 0;
  std::size_t driver_wet = absent;
  std::size_t team_perm = absent;
  std::size_t log_sigma_d = 0, log_sigma_ds = 0, log_sigma_t = 0, log_sigma_ts = 0;
  std::size_t log_sigma_wet = absent, log_sigma_perm = absent;
  std::size_t ar1_ds = absent, ar1_ts = absent;
  std::size_t dimension = 0;

  static ParameterLayout make(const ModelSpec& spec, const CompetitorIndex& index) {
    ParameterLayout l;
    const std::size_t D = index.drivers().size(), T = index.constructors().size();
    const bool slope = spec.dynamics == Dynamics::intercept_slope;
    std::size_t at = 0;
    auto block = [&](std::size_t& offset, std::size_t& count, std::size_t n) {
      offset = at, count = n, at += n;
    };
    block(l.driver, l.driver_count, D);
    block(l.driver_season, l.driver_season_count, slope ? D : index.driver_seasons().size());
    block(l.team, l.team_count, T);
    block(l.team_season, l.team_season_count, slope ? T : index.constructor_seasons().size());
    if (spec.wet_slope) l.driver_wet = at, at += D;
    if (spec.circuit_slope) l.team_perm = at, at += T;
    l.log_sigma_d = at++;
    l.log_sigma_ds = at++;
    l.log_sigma_t = at++;
    l.log_sigma_ts = at++;
    if (spec.wet_slope) l.log_sigma_wet = at++;
    if (spec.circuit_slope) l.log_sigma_perm = at++;
    if (spec.dynamics == Dynamics::ar1) {
      l.ar1_ds = at++;
      if (spec.ar1_teams) l.ar1_ts = at++;
    }
    l.dimension = at;
    return l;
  }
};

/// Abilities per race, in finishing order.
using AbilityAssembly = std::vector<std::vector<double>>;

struct LogPosterior {
  double value = 0.0;
  std::vector<double> gradient;
};

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double std_normal_lpdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

inline double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - kLogSqrt2Pi - std::log(sd);
}

/// log(1 - tanh(a)^2), stable for large |a|.
inline double log1m_tanh_sq(double a) {
  const double abs_a = std::abs(a);
  return std::log(4.0) - 2.0 * abs_a - 2.0 * std::log1p(std::exp(-2.0 * abs_a));
}

}  // namespace detail

/// Log density of a half-Student-t(df, 0, scale) at sigma > 0.
inline double half_student_t_lpdf(double sigma, double df, double scale) {
  const double q = sigma / scale;
  return std::log(2.0) + std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         0.5 * (df + 1.0) * std::log1p(q * q / df);
}

class Model {
 public:
  Model(ModelSpec spec, CompetitorIndex index, std::vector<RankOutcome> outcomes)
      : spec_(spec),
        index_(std::move(index)),
        outcomes_(std::move(outcomes)),
        layout_(ParameterLayout::make(spec_, index_)) {
    if (!(spec_.prior_scale_sigma > 0) || !(spec_.prior_df_sigma > 0)) {
      throw ConfigError("scale prior needs positive df and scale");
    }
    const auto& seasons = index_.seasons();
    if (!seasons.empty()) season_center_ = 0.5 * (seasons.front() + seasons.back());
    ds_prev_ = chain_predecessors(index_.driver_seasons());
    ts_prev_ = chain_predecessors(index_.constructor_seasons());

    race_begin_.reserve(outcomes_.size() + 1);
    race_begin_.push_back(0);
    for (const auto& o : outcomes_) {
      for (const auto& c : o.competitors) {
        if (c.driver >= index_.drivers().size() || c.constructor >= index_.constructors().size() ||
            c.driver_season >= index_.driver_seasons().size() ||
            c.constructor_season >= index_.constructor_seasons().size()) {
          throw ModelError("outcome " + o.label() + " references entities outside the index");
        }
        entries_.push_back(c);
      }
      max_field_ = std::max(max_field_, o.competitors.size());
      race_begin_.push_back(entries_.size());
    }
  }

  const ModelSpec& spec() const { return spec_; }
  const CompetitorIndex& index() const { return index_; }
  const std::vector<RankOutcome>& outcomes() const { return outcomes_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t dimension() const { return layout_.dimension; }
  double season_center() const { return season_center_; }

  /// Offset of a season from the centre of the data range (slope dynamics).
  double season_offset(std::size_t season) const {
    return index_.seasons().at(season) - season_center_;
  }

  /// Coordinate names in ParameterVector order.
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    names.reserve(layout_.dimension);
    const bool slope = spec_.dynamics == Dynamics::intercept_slope;
    for (const auto& id : index_.drivers())
      names.push_back((spec_.wet_slope ? "gamma0d[" : "theta_d[") + id + "]");
    if (slope) {
      for (const auto& id : index_.drivers()) names.push_back("beta_d[" + id + "]");
    } else {
      for (std::size_t i = 0; i < index_.driver_seasons().size(); ++i)
        names.push_back("theta_ds[" + index_.driver_season_label(i) + "]");
    }
    for (const auto& id : index_.constructors())
      names.push_back((spec_.circuit_slope ? "gamma0t[" : "theta_t[") + id + "]");
    if (slope) {
      for (const auto& id : index_.constructors()) names.push_back("beta_t[" + id + "]");
    } else {
      for (std::size_t i = 0; i < index_.constructor_seasons().size(); ++i)
        names.push_back("theta_ts[" + index_.constructor_season_label(i) + "]");
    }
    if (spec_.wet_slope)
      for (const auto& id : index_.drivers()) names.push_back("gamma1d[" + id + "]");
    if (spec_.circuit_slope)
      for (const auto& id : index_.constructors()) names.push_back("gamma1t[" + id + "]");
    names.push_back("sigma_d");
    names.push_back(slope ? "sigma_slope_d" : "sigma_ds");
    names.push_back("sigma_t");
    names.push_back(slope ? "sigma_slope_t" : "sigma_ts");
    if (spec_.wet_slope) names.push_back("sigma_wet");
    if (spec_.circuit_slope) names.push_back("sigma_perm");
    if (layout_.ar1_ds != ParameterLayout::absent) names.push_back("phi_ds");
    if (layout_.ar1_ts != ParameterLayout::absent) names.push_back("phi_ts");
    return names;
  }

  /// Parameter names followed by derived season effects (slope dynamics only).
  std::vector<std::string> output_names() const {
    auto names = parameter_names();
    if (spec_.dynamics == Dynamics::intercept_slope) {
      for (std::size_t i = 0; i < index_.driver_seasons().size(); ++i)
        names.push_back("theta_ds[" + index_.driver_season_label(i) + "]");
      for (std::size_t i = 0; i < index_.constructor_seasons().size(); ++i)
        names.push_back("theta_ts[" + index_.constructor_season_label(i) + "]");
    }
    return names;
  }

  std::size_t output_dimension() const {
    std::size_t n = layout_.dimension;
    if (spec_.dynamics == Dynamics::intercept_slope)
      n += index_.driver_seasons().size() + index_.constructor_seasons().size();
    return n;
  }

  /// Maps unconstrained coordinates to natural-scale values in output_names()
  /// order: effects on the ability scale, scales as sigma, AR coefficients as phi.
  void constrain(std::span<const double> x, std::span<double> out) const {
    check_dimension(x);
    const Effects e = effects(x);
    const auto& l = layout_;
    std::copy(e.driver.begin(), e.driver.end(), out.begin() + l.driver);
    if (spec_.dynamics == Dynamics::intercept_slope) {
      std::copy(e.driver_slope.begin(), e.driver_slope.end(), out.begin() + l.driver_season);
      std::copy(e.team_slope.begin(), e.team_slope.end(), out.begin() + l.team_season);
      std::size_t at = l.dimension;
      for (double v : e.driver_season) out[at++] = v;
      for (double v : e.team_season) out[at++] = v;
    } else {
      std::copy(e.driver_season.begin(), e.driver_season.end(), out.begin() + l.driver_season);
      std::copy(e.team_season.begin(), e.team_season.end(), out.begin() + l.team_season);
    }
    std::copy(e.team.begin(), e.team.end(), out.begin() + l.team);
    if (spec_.wet_slope) std::copy(e.driver_wet.begin(), e.driver_wet.end(), out.begin() + l.driver_wet);
    if (spec_.circuit_slope)
      std::copy(e.team_perm.begin(), e.team_perm.end(), out.begin() + l.team_perm);
    for (std::size_t i = l.log_sigma_d; i < l.dimension; ++i) {
      const bool is_phi = i == l.ar1_ds || i == l.ar1_ts;
      out[i] = is_phi ? std::tanh(x[i]) : std::exp(x[i]);
    }
  }

  /// Per-race abilities in finishing order.
  AbilityAssembly assemble_abilities(std::span<const double> x) const {
    check_dimension(x);
    const Effects e = effects(x);
    AbilityAssembly out(outcomes_.size());
    for (std::size_t r = 0; r < outcomes_.size(); ++r) {
      out[r].resize(race_begin_[r + 1] - race_begin_[r]);
      for (std::size_t k = race_begin_[r]; k < race_begin_[r + 1]; ++k)
        out[r][k - race_begin_[r]] = ability(e, entries_[k], outcomes_[r]);
    }
    return out;
  }

  /// Unnormalized log posterior; fills `grad` when non-empty. Never throws:
  /// numerical failure surfaces as a non-finite return value.
  double log_density(std::span<const double> x, std::span<double> grad) const noexcept {
    const bool want_grad = !grad.empty();
    const auto& l = layout_;
    const Effects e = effects(x);
    Effects adj = want_grad ? Effects::zeros_like(e) : Effects{};

    double lp = 0.0;
    std::vector<double> abilities(max_field_), g(max_field_), scratch(max_field_);
    for (std::size_t r = 0; r < outcomes_.size(); ++r) {
      const std::size_t m = race_begin_[r + 1] - race_begin_[r];
      const Competitor* cs = entries_.data() + race_begin_[r];
      for (std::size_t k = 0; k < m; ++k) abilities[k] = ability(e, cs[k], outcomes_[r]);
      lp += rol_log_prob_and_grad(std::span(abilities.data(), m),
                                  want_grad ? std::span(g.data(), m) : std::span<double>{},
                                  std::span(scratch.data(), m));
      if (!want_grad) continue;
      const bool wet = outcomes_[r].wet_race, perm = outcomes_[r].permanent_circuit;
      for (std::size_t k = 0; k < m; ++k) {
        adj.driver[cs[k].driver] += g[k];
        adj.driver_season[cs[k].driver_season] += g[k];
        adj.team[cs[k].constructor] += g[k];
        adj.team_season[cs[k].constructor_season] += g[k];
        if (spec_.wet_slope && wet) adj.driver_wet[cs[k].driver] += g[k];
        if (spec_.circuit_slope && perm) adj.team_perm[cs[k].constructor] += g[k];
      }
    }

    // Standard-normal priors on every raw effect coordinate.
    const std::size_t raw_end = l.log_sigma_d;
    for (std::size_t i = 0; i < raw_end; ++i) lp += detail::std_normal_lpdf(x[i]);

    // Scale priors plus log-Jacobian of sigma = exp(u).
    const double df = spec_.prior_df_sigma, scale = spec_.prior_scale_sigma;
    auto scale_term = [&](std::size_t i) {
      if (i == ParameterLayout::absent) return;
      const double sigma = std::exp(x[i]);
      lp += half_student_t_lpdf(sigma, df, scale) + x[i];
      if (want_grad) {
        const double q = sigma * sigma / (scale * scale * df);
        grad[i] = -(df + 1.0) * q / (1.0 + q) + 1.0;
      }
    };
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i : {l.log_sigma_d, l.log_sigma_ds, l.log_sigma_t, l.log_sigma_ts,
                          l.log_sigma_wet, l.log_sigma_perm})
      scale_term(i);
    // Uniform(-1, 1) prior on phi = tanh(a), with its Jacobian.
    for (std::size_t i : {l.ar1_ds, l.ar1_ts}) {
      if (i == ParameterLayout::absent) continue;
      lp += detail::log1m_tanh_sq(x[i]) - std::log(2.0);
      if (want_grad) grad[i] = -2.0 * std::tanh(x[i]);
    }
    if (!want_grad) return lp;

    for (std::size_t i = 0; i < raw_end; ++i) grad[i] = -x[i];
    auto simple_block = [&](std::size_t offset, std::size_t log_sigma,
                            const std::vector<double>& value, const std::vector<double>& a) {
      const double sigma = std::exp(x[log_sigma]);
      double g_u = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        grad[offset + i] += sigma * a[i];
        g_u += a[i] * value[i];
      }
      grad[log_sigma] += g_u;
    };
    simple_block(l.driver, l.log_sigma_d, e.driver, adj.driver);
    simple_block(l.team, l.log_sigma_t, e.team, adj.team);
    if (spec_.wet_slope) simple_block(l.driver_wet, l.log_sigma_wet, e.driver_wet, adj.driver_wet);
    if (spec_.circuit_slope)
      simple_block(l.team_perm, l.log_sigma_perm, e.team_perm, adj.team_perm);

    switch (spec_.dynamics) {
      case Dynamics::iid:
        simple_block(l.driver_season, l.log_sigma_ds, e.driver_season, adj.driver_season);
        simple_block(l.team_season, l.log_sigma_ts, e.team_season, adj.team_season);
        break;
      case Dynamics::ar1:
        ar1_backprop(x, grad, l.driver_season, l.log_sigma_ds, l.ar1_ds, ds_prev_,
                     e.driver_season, adj.driver_season);
        ar1_backprop(x, grad, l.team_season, l.log_sigma_ts, l.ar1_ts, ts_prev_, e.team_season,
                     adj.team_season);
        break;
      case Dynamics::intercept_slope:
        slope_backprop(x, grad, l.driver_season, l.log_sigma_ds, index_.driver_seasons(),
                       e.driver_season, adj.driver_season);
        slope_backprop(x, grad, l.team_season, l.log_sigma_ts, index_.constructor_seasons(),
                       e.team_season, adj.team_season);
        break;
    }
    return lp;
  }

  /// Checked log posterior with gradient; throws NonFiniteError naming the
  /// first offending coordinate.
  LogPosterior log_posterior(std::span<const double> x) const {
    check_dimension(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i])) throw NonFiniteError(parameter_names()[i], "non-finite input");
    }
    LogPosterior out;
    out.gradient.resize(layout_.dimension);
    out.value = log_density(x, out.gradient);
    for (std::size_t i = 0; i < out.gradient.size(); ++i) {
      if (!std::isfinite(out.gradient[i]))
        throw NonFiniteError(parameter_names()[i], "non-finite gradient");
    }
    if (!std::isfinite(out.value)) throw NonFiniteError("log density", "non-finite log posterior");
    return out;
  }

  std::size_t pointwise_count() const { return outcomes_.size(); }

  /// Log-likelihood of each race; these sum to the likelihood part of the
  /// log posterior.
  void pointwise_log_likelihood(std::span<const double> x, std::span<double> out) const {
    const Effects e = effects(x);
    std::vector<double> abilities(max_field_), scratch(max_field_);
    for (std::size_t r = 0; r < outcomes_.size(); ++r) {
      const std::size_t m = race_begin_[r + 1] - race_begin_[r];
      for (std::size_t k = 0; k < m; ++k)
        abilities[k] = ability(e, entries_[race_begin_[r] + k], outcomes_[r]);
      out[r] = rol_log_prob_and_grad(std::span(abilities.data(), m), {},
                                     std::span(scratch.data(), m));
    }
  }

  double log_likelihood(std::span<const double> x) const {
    std::vector<double> pointwise(outcomes_.size());
    pointwise_log_likelihood(x, pointwise);
    double total = 0.0;
    for (double v : pointwise) total += v;
    return total;
  }

  /// Season-effect prior under AR(1) dynamics, written on the effect scale:
  /// each observed season's effect is normal around phi times the previous
  /// consecutive season's effect (zero at a chain start) with sd sigma.
  double ar1_prior_terms(std::span<const double> x) const {
    if (spec_.dynamics != Dynamics::ar1) throw ModelError("ar1_prior_terms needs ar1 dynamics");
    check_dimension(x);
    const Effects e = effects(x);
    const auto& l = layout_;
    auto chain_density = [&](const std::vector<double>& theta, const std::vector<std::size_t>& prev,
                             std::size_t log_sigma, std::size_t ar) {
      const double sigma = std::exp(x[log_sigma]);
      const double phi = ar == ParameterLayout::absent ? 0.0 : std::tanh(x[ar]);
      double lp = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double mean = prev[i] == ParameterLayout::absent ? 0.0 : phi * theta[prev[i]];
        lp += detail::normal_lpdf(theta[i], mean, sigma);
      }
      return lp;
    };
    return chain_density(e.driver_season, ds_prev_, l.log_sigma_ds, l.ar1_ds) +
           chain_density(e.team_season, ts_prev_, l.log_sigma_ts, l.ar1_ts);
  }

  /// Slope prior under intercept-slope dynamics, on the effect scale.
  double slope_variant_terms(std::span<const double> x) const {
    if (spec_.dynamics != Dynamics::intercept_slope)
      throw ModelError("slope_variant_terms needs intercept-slope dynamics");
    check_dimension(x);
    const Effects e = effects(x);
    const double sd = std::exp(x[layout_.log_sigma_ds]), st = std::exp(x[layout_.log_sigma_ts]);
    double lp = 0.0;
    for (double b : e.driver_slope) lp += detail::normal_lpdf(b, 0.0, sd);
    for (double b : e.team_slope) lp += detail::normal_lpdf(b, 0.0, st);
    return lp;
  }

  /// Predecessor of each season pair in its AR(1) chain, or absent at a
  /// chain start (first season, or a gap of more than one year).
  const std::vector<std::size_t>& driver_season_predecessors() const { return ds_prev_; }
  const std::vector<std::size_t>& constructor_season_predecessors() const { return ts_prev_; }

 private:
  struct Effects {
    std::vector<double> driver, driver_season, team, team_season, driver_wet, team_perm;
    std::vector<double> driver_slope, team_slope;  // slope dynamics only

    static Effects zeros_like(const Effects& e) {
      Effects z;
      z.driver.assign(e.driver.size(), 0.0);
      z.driver_season.assign(e.driver_season.size(), 0.0);
      z.team.assign(e.team.size(), 0.0);
      z.team_season.assign(e.team_season.size(), 0.0);
      z.driver_wet.assign(e.driver_wet.size(), 0.0);
      z.team_perm.assign(e.team_perm.size(), 0.0);
      return z;
    }
  };

  void check_dimension(std::span<const double> x) const {
    if (x.size() != layout_.dimension) {
      throw ModelError("parameter vector has dimension " + std::to_string(x.size()) +
                       ", model expects " + std::to_string(layout_.dimension));
    }
  }

  std::vector<std::size_t> chain_predecessors(
      const std::vector<CompetitorIndex::SeasonPair>& pairs) const {
    std::vector<std::size_t> prev(pairs.size(), ParameterLayout::absent);
    const auto& years = index_.seasons();
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      if (pairs[i].entity == pairs[i - 1].entity &&
          years[pairs[i].season] - years[pairs[i - 1].season] == 1)
        prev[i] = i - 1;
    }
    return prev;
  }

  Effects effects(std::span<const double> x) const {
    const auto& l = layout_;
    Effects e;
    auto scaled = [&](std::size_t offset, std::size_t count, std::size_t log_sigma) {
      const double sigma = std::exp(x[log_sigma]);
      std::vector<double> v(count);
      for (std::size_t i = 0; i < count; ++i) v[i] = sigma * x[offset + i];
      return v;
    };
    e.driver = scaled(l.driver, l.driver_count, l.log_sigma_d);
    e.team = scaled(l.team, l.team_count, l.log_sigma_t);
    if (spec_.wet_slope) e.driver_wet = scaled(l.driver_wet, l.driver_count, l.log_sigma_wet);
    if (spec_.circuit_slope) e.team_perm = scaled(l.team_perm, l.team_count, l.log_sigma_perm);
    switch (spec_.dynamics) {
      case Dynamics::iid:
        e.driver_season = scaled(l.driver_season, l.driver_season_count, l.log_sigma_ds);
        e.team_season = scaled(l.team_season, l.team_season_count, l.log_sigma_ts);
        break;
      case Dynamics::ar1:
        e.driver_season = ar1_effects(x, l.driver_season, l.log_sigma_ds, l.ar1_ds, ds_prev_);
        e.team_season = ar1_effects(x, l.team_season, l.log_sigma_ts, l.ar1_ts, ts_prev_);
        break;
      case Dynamics::intercept_slope: {
        e.driver_slope = scaled(l.driver_season, l.driver_season_count, l.log_sigma_ds);
        e.team_slope = scaled(l.team_season, l.team_season_count, l.log_sigma_ts);
        const auto& ds = index_.driver_seasons();
        const auto& ts = index_.constructor_seasons();
        e.driver_season.resize(ds.size());
        e.team_season.resize(ts.size());
        for (std::size_t i = 0; i < ds.size(); ++i)
          e.driver_season[i] = e.driver_slope[ds[i].entity] * season_offset(ds[i].season);
        for (std::size_t i = 0; i < ts.size(); ++i)
          e.team_season[i] = e.team_slope[ts[i].entity] * season_offset(ts[i].season);
        break;
      }
    }
    return e;
  }

  std::vector<double> ar1_effects(std::span<const double> x, std::size_t offset,
                                  std::size_t log_sigma, std::size_t ar,
                                  const std::vector<std::size_t>& prev) const {
    const double sigma = std::exp(x[log_sigma]);
    const double phi = ar == ParameterLayout::absent ? 0.0 : std::tanh(x[ar]);
    std::vector<double> theta(prev.size());
    for (std::size_t i = 0; i < prev.size(); ++i) {
      theta[i] = sigma * x[offset + i];
      if (prev[i] != ParameterLayout::absent) theta[i] += phi * theta[prev[i]];
    }
    return theta;
  }

  // theta_i = phi * theta_prev(i) + sigma * z_i; the adjoint runs backwards
  // along each chain.
  void ar1_backprop(std::span<const double> x, std::span<double> grad, std::size_t offset,
                    std::size_t log_sigma, std::size_t ar, const std::vector<std::size_t>& prev,
                    const std::vector<double>& theta, std::vector<double> adjoint) const {
    const double sigma = std::exp(x[log_sigma]);
    const double phi = ar == ParameterLayout::absent ? 0.0 : std::tanh(x[ar]);
    double g_sigma = 0.0, g_phi = 0.0;
    for (std::size_t i = prev.size(); i-- > 0;) {
      grad[offset + i] += sigma * adjoint[i];
      g_sigma += adjoint[i] * x[offset + i];
      if (prev[i] != ParameterLayout::absent) {
        g_phi += adjoint[i] * theta[prev[i]];
        adjoint[prev[i]] += phi * adjoint[i];
      }
    }
    grad[log_sigma] += sigma * g_sigma;
    if (ar != ParameterLayout::absent) grad[ar] += g_phi * (1.0 - phi * phi);
  }

  void slope_backprop(std::span<const double> x, std::span<double> grad, std::size_t offset,
                      std::size_t log_sigma, const std::vector<CompetitorIndex::SeasonPair>& pairs,
                      const std::vector<double>& theta, const std::vector<double>& adjoint) const {
    const double sigma = std::exp(x[log_sigma]);
    double g_u = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      grad[offset + pairs[i].entity] += sigma * adjoint[i] * season_offset(pairs[i].season);
      g_u += adjoint[i] * theta[i];
    }
    grad[log_sigma] += g_u;
  }

  double ability(const Effects& e, const Competitor& c, const RankOutcome& race) const {
    double a = e.driver[c.driver] + e.driver_season[c.driver_season] + e.team[c.constructor] +
               e.team_season[c.constructor_season];
    if (spec_.wet_slope && race.wet_race) a += e.driver_wet[c.driver];
    if (spec_.circuit_slope && race.permanent_circuit) a += e.team_perm[c.constructor];
    return a;
  }

  ModelSpec spec_;
  CompetitorIndex index_;
  std::vector<RankOutcome> outcomes_;
  ParameterLayout layout_;
  double season_center_ = 0.0;
  std::vector<std::size_t> ds_prev_, ts_prev_;
  std::vector<Competitor> entries_;
  std::vector<std::size_t> race_begin_;
  std::size_t max_field_ = 0;
};

}  // namespace f1rank
